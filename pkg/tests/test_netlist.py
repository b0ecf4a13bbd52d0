import math

import numpy as np
import pytest

from obx.analysis.pencil import differentiation_index, is_regular, weierstrass
from obx.errors import NetlistParseError, StampError
from obx.model.dae import dae_from_json, dae_to_json
from obx.model.netlist import load_netlist, parse, parse_number, stamp, unparse

from .conftest import NETLIST_CORPUS


def test_single_resistor():
    netlist = parse("R1 1 0 1.0")
    assert len(netlist.elements) == 1
    assert netlist.node_count == 2
    element = netlist.elements[0]
    assert (element.kind, element.n1, element.n2, element.value) == ("R", 1, 0, 1.0)


def test_source_and_capacitor():
    netlist = parse("V1 1 0 SIN 1 1 1.0\nC1 1 0 1")
    source, cap = netlist.elements
    assert source.kind == "V" and (source.amp_c, source.amp_s, source.freq) == (1.0, 1.0, 1.0)
    assert cap.kind == "C" and cap.value == 1.0


def test_unknown_element_reports_line():
    with pytest.raises(NetlistParseError, match="unknown element 'X' at line 1") as info:
        parse("X1 1 0 5")
    assert info.value.line == 1


@pytest.mark.parametrize("text,message", [
    ("R1 1 0 1\nR1 2 0 1", "duplicate element name"),
    ("R1 a 0 1", "bad node id"),
    ("R1 -1 0 1", "bad node id"),
    ("R1 1 0 1x", "malformed number"),
    ("R1 1 0 -5", "must be positive"),
    ("C1 1 0 0", "must be positive"),
    ("V1 1 1 SIN 1 0 1", "shorted"),
    ("V1 1 0 DC 1", "SIN"),
    ("R1 1 0", "expected"),
    ("# only a comment\n", "no elements"),
])
def test_parse_errors(text, message):
    with pytest.raises(NetlistParseError, match=message):
        parse(text)


def test_error_line_counts_comments_and_blanks():
    with pytest.raises(NetlistParseError) as info:
        parse("# header\n\nR1 1 0 1\nQ2 1 0 1\n")
    assert info.value.line == 4


def test_file_name_prefix(tmp_path):
    path = tmp_path / "bad.cir"
    path.write_text("R1 1 0 zz\n")
    with pytest.raises(NetlistParseError, match="bad.cir"):
        load_netlist(path)


@pytest.mark.parametrize("token,value", [
    ("4.7k", 4700.0), ("10meg", 1e7), ("10MEG", 1e7), ("1u", 1e-6), ("2.2n", 2.2e-9),
    ("1F", 1e-15), ("3m", 3e-3), ("1e-3", 1e-3), (".5", 0.5), ("1g", 1e9), ("1t", 1e12),
])
def test_spice_suffixes(token, value):
    assert parse_number(token) == pytest.approx(value, rel=1e-15)


def test_case_insensitive_letters_and_comments():
    netlist = parse("r1 1 0 2  # load\nv1 1 0 sin 1 0 50\n")
    assert [e.kind for e in netlist.elements] == ["R", "V"]
    assert netlist.elements[1].freq == 50.0


def test_node_ids_are_compacted():
    netlist = parse("R1 5 0 1\nR2 5 9 1\nR3 9 0 1")
    assert netlist.node_count == 3
    assert [(e.n1, e.n2) for e in netlist.elements] == [(1, 0), (1, 2), (2, 0)]
    assert netlist.node_names == ("0", "5", "9")


@pytest.mark.parametrize("name", sorted(NETLIST_CORPUS))
def test_unparse_round_trip(name):
    netlist = parse(NETLIST_CORPUS[name])
    assert parse(unparse(netlist)).elements == netlist.elements


def test_voltage_source_with_resistor_stamp():
    dae = stamp(parse("V1 1 0 SIN 1 0 1\nR1 1 0 1"))
    np.testing.assert_array_equal(dae.G, [[1.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(dae.C, np.zeros((2, 2)))
    np.testing.assert_array_equal(dae.source.b_c, [0.0, 1.0])
    assert dae.omega == pytest.approx(2 * math.pi)
    assert dae.labels == ("v(1)", "i(V1)")


def test_inductor_and_current_source_stamps():
    dae = stamp(parse("I1 0 1 SIN 2 3 1\nR1 1 2 4\nL1 2 0 0.5"))
    # unknowns: v1, v2, i(L1)
    np.testing.assert_allclose(dae.G, [[0.25, -0.25, 0.0], [-0.25, 0.25, 1.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(dae.C, [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -0.5]])
    np.testing.assert_array_equal(dae.source.b_c, [2.0, 0.0, 0.0])
    np.testing.assert_array_equal(dae.source.b_s, [3.0, 0.0, 0.0])


def test_mixed_frequencies_rejected():
    with pytest.raises(StampError, match="mixed source frequencies"):
        stamp(parse("V1 1 0 SIN 1 0 1\nR1 1 2 1\nI1 2 0 SIN 1 0 2\nR2 2 0 1"))


def test_floating_node_rejected():
    with pytest.raises(StampError, match="floating"):
        stamp(parse("V1 1 0 SIN 1 0 1\nR1 1 0 1\nI1 2 0 SIN 1 0 1"))


def test_stamp_is_invariant_under_line_permutation():
    lines = NETLIST_CORPUS["rlc"].strip().splitlines()
    reference = stamp(parse("\n".join(lines)))
    shuffled = stamp(parse("\n".join(reversed(lines))))
    np.testing.assert_array_equal(shuffled.C, reference.C)
    np.testing.assert_array_equal(shuffled.G, reference.G)
    np.testing.assert_array_equal(shuffled.source.b_c, reference.source.b_c)


def test_series_rc_is_index_one():
    dae = stamp(parse(NETLIST_CORPUS["rc_series"]))
    assert differentiation_index(dae.C, dae.G) == 1


def test_source_across_capacitor_is_index_two():
    dae = stamp(parse(NETLIST_CORPUS["v_across_c"]))
    assert differentiation_index(dae.C, dae.G) == 2


@pytest.mark.parametrize("name", sorted(NETLIST_CORPUS))
def test_corpus_pencils_are_regular_and_split(name):
    dae = stamp(parse(NETLIST_CORPUS[name]))
    assert is_regular(dae.C, dae.G)
    decomp = weierstrass(dae.C, dae.G)
    assert decomp.residual <= 1e-10 * (np.linalg.norm(dae.C) + np.linalg.norm(dae.G))


def test_stamped_system_exports_to_json():
    dae = stamp(parse(NETLIST_CORPUS["rlc"]))
    back = dae_from_json(dae_to_json(dae))
    np.testing.assert_array_equal(back.C, dae.C)
    assert back.omega == dae.omega
