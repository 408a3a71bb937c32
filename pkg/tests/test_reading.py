"""Descriptor thresholds, rule-table parsing/totality, and report generation."""

import itertools
import re

import numpy as np
import pytest

from palmreader.errors import RuleTableError
from palmreader.features import Contour, LineKind, PalmLine
from palmreader.reading import (
    DISCLAIMER,
    LengthClass,
    LineDescriptor,
    ShapeClass,
    default_rules_path,
    describe_line,
    generate_report,
    load_rule_table,
    parse_rule_table,
)
from palmreader.synth import HandCategory

DIAG = 100.0


def make_line(kind, arc, depth, confidence=0.9):
    contour = Contour(np.array([[0, 0], [1, 0]]))
    return PalmLine(kind=kind, contour=contour, arc_length=arc, depth=depth, confidence=confidence)


def total_rule_text(combos=(), declared=None, drop=None, blank=None):
    """Build a complete table programmatically; oracle for lookup texts."""
    lines = ["version = 1"]
    declared = list(declared if declared is not None else [name for name, _ in combos])
    lines.append("combinations = " + ", ".join(declared))
    for kind in LineKind:
        for length in LengthClass:
            for shape in ShapeClass:
                key = f"{kind.label}.{length.value}.{shape.value}"
                if key == drop:
                    continue
                text = "" if key == blank else f"text for {key}"
                lines.append(f"{key} = {text}")
        key = f"{kind.label}.absent"
        if key != drop:
            lines.append(f"{key} = no {kind.label} line text")
    for name, value in combos:
        lines.append(f"combo.{name} = {value}")
    return "\n".join(lines) + "\n"


# --- describe_line -----------------------------------------------------------


def test_short_straight_descriptor():
    d = describe_line(make_line(LineKind.HEART, arc=0.10 * DIAG, depth=0.02 * 0.10 * DIAG), DIAG)
    assert d.length_class is LengthClass.SHORT
    assert d.shape_class is ShapeClass.STRAIGHT
    assert d.present


def test_long_curved_descriptor():
    d = describe_line(make_line(LineKind.LIFE, arc=0.50 * DIAG, depth=0.20 * 0.50 * DIAG), DIAG)
    assert d.length_class is LengthClass.LONG
    assert d.shape_class is ShapeClass.CURVED


def test_short_boundary_falls_into_medium():
    d = describe_line(make_line(LineKind.HEAD, arc=0.25 * DIAG, depth=0.0), DIAG)
    assert d.length_class is LengthClass.MEDIUM


def test_long_boundary_falls_into_medium():
    d = describe_line(make_line(LineKind.HEAD, arc=0.45 * DIAG, depth=0.0), DIAG)
    assert d.length_class is LengthClass.MEDIUM


def test_curved_threshold_is_inclusive():
    # 3/25 rounds to the same float64 as the literal 0.12 threshold
    d = describe_line(make_line(LineKind.FATE, arc=25.0, depth=3.0), DIAG)
    assert d.shape_class is ShapeClass.CURVED
    d2 = describe_line(make_line(LineKind.FATE, arc=25.0, depth=2.9), DIAG)
    assert d2.shape_class is ShapeClass.STRAIGHT


def test_custom_thresholds_are_honored():
    line = make_line(LineKind.HEART, arc=30.0, depth=3.0)
    d = describe_line(line, DIAG, short_max=0.31, long_min=0.5, curved_min=0.09)
    assert d.length_class is LengthClass.SHORT
    assert d.shape_class is ShapeClass.CURVED


def test_describe_rejects_nonpositive_diagonal():
    with pytest.raises(ValueError):
        describe_line(make_line(LineKind.HEART, 10.0, 1.0), 0.0)


def test_descriptor_class_consistency_enforced():
    with pytest.raises(ValueError):
        LineDescriptor(kind=LineKind.HEART, present=True)
    with pytest.raises(ValueError):
        LineDescriptor(kind=LineKind.HEART, present=False, length_class=LengthClass.SHORT)


# --- rule table parsing ------------------------------------------------------


def test_parse_then_lookup_returns_verbatim_text():
    table = parse_rule_table(total_rule_text())
    assert table.version == 1
    for kind in LineKind:
        for length in LengthClass:
            for shape in ShapeClass:
                expected = f"text for {kind.label}.{length.value}.{shape.value}"
                assert table.lookup(kind, length, shape) == expected
        assert table.absent_text(kind) == f"no {kind.label} line text"


def test_missing_trait_key_rejected_by_name():
    with pytest.raises(RuleTableError, match="head.medium.curved"):
        parse_rule_table(total_rule_text(drop="head.medium.curved"))


def test_missing_absent_key_rejected():
    with pytest.raises(RuleTableError, match="fate.absent"):
        parse_rule_table(total_rule_text(drop="fate.absent"))


def test_empty_text_rejected():
    with pytest.raises(RuleTableError, match="life.short.curved"):
        parse_rule_table(total_rule_text(blank="life.short.curved"))


def test_unknown_key_rejected():
    with pytest.raises(RuleTableError, match="unknown key"):
        parse_rule_table(total_rule_text() + "thumb.long.straight = nope\n")


def test_duplicate_key_rejected():
    text = total_rule_text() + "heart.short.straight = again\n"
    with pytest.raises(RuleTableError, match="duplicate"):
        parse_rule_table(text)


def test_missing_version_rejected():
    text = "\n".join(total_rule_text().splitlines()[1:])
    with pytest.raises(RuleTableError, match="version"):
        parse_rule_table(text)


def test_missing_combinations_declaration_rejected():
    text = "\n".join(l for l in total_rule_text().splitlines() if not l.startswith("combinations"))
    with pytest.raises(RuleTableError, match="combinations"):
        parse_rule_table(text)


def test_undeclared_combo_line_rejected():
    text = total_rule_text() + "combo.rogue = heart.present : surprise\n"
    with pytest.raises(RuleTableError, match="combinations"):
        parse_rule_table(text)


def test_declared_but_missing_combo_rejected():
    with pytest.raises(RuleTableError, match="combinations"):
        parse_rule_table(total_rule_text(declared=["phantom"]))


def test_malformed_combo_predicate_rejected():
    bad = [("broken", "heart.sideways : text")]
    with pytest.raises(RuleTableError):
        parse_rule_table(total_rule_text(combos=bad))


def test_combo_requires_text_separator():
    bad = [("broken", "heart.present no separator")]
    with pytest.raises(RuleTableError, match="predicate"):
        parse_rule_table(total_rule_text(combos=bad))


def test_noise_lines_rejected():
    with pytest.raises(RuleTableError, match="key = value"):
        parse_rule_table(total_rule_text() + "just some words\n")


# --- default rule file -------------------------------------------------------


def read_default_raw():
    """Independent minimal parse of the shipped file: first '=' split."""
    raw = {}
    for line in default_rules_path().read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def test_default_file_is_total_and_verbatim():
    raw = read_default_raw()
    table = load_rule_table(default_rules_path())
    expected_keys = {
        f"{kind.label}.{length.value}.{shape.value}"
        for kind in LineKind
        for length in LengthClass
        for shape in ShapeClass
    } | {f"{kind.label}.absent" for kind in LineKind}
    assert expected_keys <= set(raw)
    for kind in LineKind:
        for length in LengthClass:
            for shape in ShapeClass:
                key = f"{kind.label}.{length.value}.{shape.value}"
                assert table.lookup(kind, length, shape) == raw[key]
        assert table.absent_text(kind) == raw[f"{kind.label}.absent"]
    declared = {n.strip() for n in raw["combinations"].split(",")}
    assert {c.name for c in table.combos} == declared


def test_load_missing_rule_file_names_path():
    with pytest.raises(RuleTableError, match="no/such/file.rules"):
        load_rule_table("no/such/file.rules")


# --- generate_report ---------------------------------------------------------


def full_hand():
    return [
        make_line(LineKind.HEART, arc=52.0, depth=9.0, confidence=0.9),
        make_line(LineKind.HEAD, arc=35.0, depth=1.0, confidence=0.8),
        make_line(LineKind.LIFE, arc=40.0, depth=6.0, confidence=0.7),
        make_line(LineKind.FATE, arc=20.0, depth=1.0, confidence=0.6),
    ]


def test_zero_lines_gives_four_absent_entries_and_disclaimer():
    table = parse_rule_table(total_rule_text())
    report = generate_report([], HandCategory.FEMALE_LEFT, table, DIAG)
    assert len(report.entries) == 4
    assert all(not e.descriptor.present for e in report.entries)
    assert all(e.confidence == 0.0 for e in report.entries)
    texts = [e.text for e in report.entries]
    assert texts == [f"no {k.label} line text" for k in LineKind]
    assert report.disclaimer == DISCLAIMER


def test_missing_fate_line_still_succeeds_with_absent_text():
    table = parse_rule_table(total_rule_text())
    lines = [l for l in full_hand() if l.kind is not LineKind.FATE]
    report = generate_report(lines, HandCategory.MALE_RIGHT, table, DIAG)
    fate_entry = report.entry_for(LineKind.FATE)
    assert not fate_entry.descriptor.present
    assert fate_entry.text == "no fate line text"
    assert report.entry_for(LineKind.HEART).descriptor.present


def test_entries_ordered_by_kind_regardless_of_input_order():
    table = parse_rule_table(total_rule_text())
    report = generate_report(list(reversed(full_hand())), HandCategory.MALE_LEFT, table, DIAG)
    assert [e.descriptor.kind for e in report.entries] == list(LineKind)
    assert report.entry_for(LineKind.HEAD).confidence == 0.8


def test_trait_text_matches_descriptor_lookup():
    table = parse_rule_table(total_rule_text())
    report = generate_report(full_hand(), HandCategory.MALE_LEFT, table, DIAG)
    heart = report.entry_for(LineKind.HEART)
    assert heart.descriptor.length_class is LengthClass.LONG
    assert heart.descriptor.shape_class is ShapeClass.CURVED
    assert heart.text == "text for heart.long.curved"


def test_long_curved_heart_text_verbatim_from_default_file():
    raw = read_default_raw()
    table = load_rule_table(default_rules_path())
    report = generate_report(full_hand(), HandCategory.FEMALE_RIGHT, table, DIAG)
    assert report.entry_for(LineKind.HEART).text == raw["heart.long.curved"]


def test_duplicate_kind_rejected():
    table = parse_rule_table(total_rule_text())
    lines = [make_line(LineKind.HEAD, 30, 0), make_line(LineKind.HEAD, 40, 0)]
    with pytest.raises(ValueError, match="duplicate"):
        generate_report(lines, HandCategory.MALE_LEFT, table, DIAG)


def test_report_deterministic():
    table = load_rule_table(default_rules_path())
    a = generate_report(full_hand(), HandCategory.MALE_LEFT, table, DIAG)
    b = generate_report(full_hand(), HandCategory.MALE_LEFT, table, DIAG)
    assert a.as_dict() == b.as_dict()


def test_every_subset_of_kinds_yields_complete_report():
    table = parse_rule_table(total_rule_text())
    hand = {l.kind: l for l in full_hand()}
    for r in range(5):
        for kinds in itertools.combinations(LineKind, r):
            report = generate_report([hand[k] for k in kinds], HandCategory.MALE_LEFT, table, DIAG)
            assert [e.descriptor.kind for e in report.entries] == list(LineKind)
            present = {e.descriptor.kind for e in report.entries if e.descriptor.present}
            assert present == set(kinds)


def test_greeting_varies_with_category():
    table = parse_rule_table(total_rule_text())
    greetings = {
        generate_report([], cat, table, DIAG).greeting for cat in HandCategory
    }
    assert len(greetings) == 4
    g = generate_report([], HandCategory.FEMALE_RIGHT, table, DIAG).greeting
    assert "right" in g and "female" in g


def test_combination_atoms_match_wildcards_and_absence():
    combos = [
        ("guarded", "heart.short.* & fate.absent : guarded text"),
        ("steady", "head.*.straight & life.present : steady text"),
        ("never", "heart.long.curved & heart.absent : impossible"),
    ]
    table = parse_rule_table(total_rule_text(combos=combos))
    lines = [
        make_line(LineKind.HEART, arc=0.10 * DIAG, depth=0.0),
        make_line(LineKind.HEAD, arc=30.0, depth=0.0),
        make_line(LineKind.LIFE, arc=40.0, depth=6.0),
    ]
    report = generate_report(lines, HandCategory.MALE_LEFT, table, DIAG)
    assert ("guarded", "guarded text") in report.combinations
    assert ("steady", "steady text") in report.combinations
    assert all(name != "never" for name, _ in report.combinations)


def test_report_dict_shape_for_service():
    table = load_rule_table(default_rules_path())
    d = generate_report(full_hand(), HandCategory.MALE_LEFT, table, DIAG).as_dict()
    assert set(d) == {"greeting", "category", "entries", "combinations", "disclaimer"}
    assert d["category"] == "male_left"
    assert len(d["entries"]) == 4
    assert {e["kind"] for e in d["entries"]} == {k.label for k in LineKind}
    for e in d["entries"]:
        assert isinstance(e["text"], str) and e["text"]
