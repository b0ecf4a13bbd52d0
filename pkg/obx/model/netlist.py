"""SPICE-like netlist subset and its modified nodal analysis stamps.

Grammar, one element per line, ``#`` starts a comment::

    R<name> n1 n2 <ohms>
    C<name> n1 n2 <farads>
    L<name> n1 n2 <henries>
    V<name> n1 n2 SIN <amp_c> <amp_s> <freq_Hz>
    I<name> n1 n2 SIN <amp_c> <amp_s> <freq_Hz>

Node 0 is ground. Numbers accept the SPICE magnitude suffixes
f p n u m k meg g t (case-insensitive).
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NetlistParseError, StampError
from .dae import LinearDae, SinusoidalSource

logger = logging.getLogger(__name__)

PASSIVE_KINDS = ("R", "C", "L")
SOURCE_KINDS = ("V", "I")

SPICE_SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
    "t": 1e12,
}

_NUMBER_RE = re.compile(
    r"^(?P<mantissa>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<suffix>meg|[fpnumkgt])?$",
    re.IGNORECASE,
)

# Sources sharing a frequency must agree to this relative tolerance.
FREQ_RTOL = 1e-12


@dataclass(frozen=True)
class Element:
    kind: str
    name: str
    n1: int
    n2: int
    value: float | None = None
    amp_c: float = 0.0
    amp_s: float = 0.0
    freq: float = 0.0

    @property
    def is_source(self) -> bool:
        return self.kind in SOURCE_KINDS


@dataclass(frozen=True)
class Netlist:
    """Parsed circuit with node ids compacted to 0..node_count-1.

    Attributes:
        elements: Elements in file order.
        node_count: Number of nodes including ground.
        node_names: Original node id of each compacted node, ground first.
    """
    elements: tuple[Element, ...]
    node_count: int
    node_names: tuple[str, ...] = ("0",)


def parse_number(token: str) -> float:
    """Parses a SPICE number such as ``4.7k``, ``10meg`` or ``1e-3``.

    Raises:
        ValueError: If the token is not a number.
    """
    match = _NUMBER_RE.match(token.strip())
    if not match:
        raise ValueError(f"malformed number '{token}'")
    value = float(match.group("mantissa"))
    suffix = match.group("suffix")
    if suffix:
        value *= SPICE_SUFFIXES[suffix.lower()]
    if not math.isfinite(value):
        raise ValueError(f"malformed number '{token}'")
    return value


def _parse_node(token: str, line_no: int, source: str | None) -> int:
    try:
        node = int(token)
    except ValueError:
        raise NetlistParseError(f"bad node id '{token}'", line_no, source) from None
    if node < 0:
        raise NetlistParseError(f"bad node id '{token}'", line_no, source)
    return node


def _parse_line(tokens: list[str], line_no: int, source: str | None) -> Element:
    name = tokens[0]
    kind = name[0].upper()
    if kind not in PASSIVE_KINDS + SOURCE_KINDS:
        raise NetlistParseError(f"unknown element '{name[0]}'", line_no, source)
    if len(tokens) < 3:
        raise NetlistParseError(f"element '{name}' needs two nodes", line_no, source)
    n1 = _parse_node(tokens[1], line_no, source)
    n2 = _parse_node(tokens[2], line_no, source)

    def number(token: str) -> float:
        try:
            return parse_number(token)
        except ValueError as e:
            raise NetlistParseError(str(e), line_no, source) from e

    if kind in PASSIVE_KINDS:
        if len(tokens) != 4:
            raise NetlistParseError(f"expected '{name} n1 n2 value', got {len(tokens)} fields", line_no, source)
        value = number(tokens[3])
        if value <= 0:
            raise NetlistParseError(f"value of '{name}' must be positive, got {value:g}", line_no, source)
        return Element(kind=kind, name=name, n1=n1, n2=n2, value=value)

    if len(tokens) != 7 or tokens[3].upper() != "SIN":
        raise NetlistParseError(f"expected '{name} n1 n2 SIN amp_c amp_s freq'", line_no, source)
    if n1 == n2:
        raise NetlistParseError(f"source '{name}' is shorted (both terminals on node {n1})", line_no, source)
    amp_c, amp_s, freq = (number(t) for t in tokens[4:7])
    if freq < 0:
        raise NetlistParseError(f"frequency of '{name}' must be non-negative, got {freq:g}", line_no, source)
    return Element(kind=kind, name=name, n1=n1, n2=n2, amp_c=amp_c, amp_s=amp_s, freq=freq)


def parse(text: str, source: str | None = None) -> Netlist:
    """Parses netlist text.

    Args:
        text: Netlist contents.
        source: Optional file name used as an error message prefix.

    Raises:
        NetlistParseError: With the offending line number.
    """
    elements: list[Element] = []
    seen: dict[str, int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        element = _parse_line(line.split(), line_no, source)
        key = element.name.upper()
        if key in seen:
            raise NetlistParseError(
                f"duplicate element name '{element.name}' (first defined at line {seen[key]})", line_no, source
            )
        seen[key] = line_no
        elements.append(element)
    if not elements:
        raise NetlistParseError("netlist has no elements", source=source)

    # Compact node ids, keeping ground at 0 and the original order otherwise.
    used = sorted({n for e in elements for n in (e.n1, e.n2)} - {0})
    remap = {0: 0, **{node: i + 1 for i, node in enumerate(used)}}
    compacted = tuple(
        Element(e.kind, e.name, remap[e.n1], remap[e.n2], e.value, e.amp_c, e.amp_s, e.freq)
        for e in elements
    )
    netlist = Netlist(
        elements=compacted,
        node_count=len(used) + 1,
        node_names=("0", *(str(n) for n in used)),
    )
    logger.debug(f"Parsed {len(compacted)} elements over {netlist.node_count} nodes")
    return netlist


def unparse(netlist: Netlist) -> str:
    """Renders canonical text that parses back to the same element list."""
    lines = []
    for e in netlist.elements:
        if e.is_source:
            lines.append(f"{e.name} {e.n1} {e.n2} SIN {e.amp_c!r} {e.amp_s!r} {e.freq!r}")
        else:
            lines.append(f"{e.name} {e.n1} {e.n2} {e.value!r}")
    return "\n".join(lines) + "\n"


def load_netlist(path: str | Path) -> Netlist:
    path = Path(path)
    with open(path, "r") as f:
        text = f.read()
    return parse(text, source=str(path))


def source_frequency(netlist: Netlist) -> float:
    """The shared source frequency in Hz, 0 for a source-free circuit.

    Raises:
        StampError: If sources run at different frequencies.
    """
    freqs = [e.freq for e in netlist.elements if e.is_source]
    if not freqs:
        return 0.0
    ref = freqs[0]
    for e in netlist.elements:
        if e.is_source and not math.isclose(e.freq, ref, rel_tol=FREQ_RTOL, abs_tol=0.0):
            raise StampError(f"mixed source frequencies: '{e.name}' runs at {e.freq:g} Hz, expected {ref:g} Hz")
    return ref


def stamp(netlist: Netlist) -> LinearDae:
    """Builds C x' + G x = b(t) by modified nodal analysis.

    Unknowns are the non-ground node voltages in ascending node order, then one
    branch current per voltage source and per inductor, each in file order.

    Raises:
        StampError: On mixed source frequencies or a floating node.
    """
    omega = 2.0 * math.pi * source_frequency(netlist)
    n_nodes = netlist.node_count - 1
    vsrcs = [e for e in netlist.elements if e.kind == "V"]
    inductors = [e for e in netlist.elements if e.kind == "L"]
    n = n_nodes + len(vsrcs) + len(inductors)
    if n == 0:
        raise StampError("circuit has no unknowns: every element is connected to ground only")

    C = np.zeros((n, n))
    G = np.zeros((n, n))
    b_c = np.zeros(n)
    b_s = np.zeros(n)

    def idx(node: int) -> int | None:
        return None if node == 0 else node - 1

    def add(M: np.ndarray, row: int | None, col: int | None, value: float) -> None:
        if row is not None and col is not None:
            M[row, col] += value

    def add_two_terminal(M: np.ndarray, a: int | None, c: int | None, value: float) -> None:
        add(M, a, a, value)
        add(M, c, c, value)
        add(M, a, c, -value)
        add(M, c, a, -value)

    branch = {e.name: n_nodes + k for k, e in enumerate(vsrcs + inductors)}
    for e in netlist.elements:
        a, c = idx(e.n1), idx(e.n2)
        if e.kind == "R":
            add_two_terminal(G, a, c, 1.0 / e.value)
        elif e.kind == "C":
            add_two_terminal(C, a, c, e.value)
        elif e.kind in ("V", "L"):
            j = branch[e.name]
            add(G, a, j, 1.0)
            add(G, c, j, -1.0)
            add(G, j, a, 1.0)
            add(G, j, c, -1.0)
            if e.kind == "L":
                C[j, j] = -e.value
            else:
                b_c[j] = e.amp_c
                b_s[j] = e.amp_s
        elif e.kind == "I":
            # current flows from n1 through the source into n2
            if a is not None:
                b_c[a] -= e.amp_c
                b_s[a] -= e.amp_s
            if c is not None:
                b_c[c] += e.amp_c
                b_s[c] += e.amp_s

    labels = (
        [f"v({name})" for name in netlist.node_names[1:]]
        + [f"i({e.name})" for e in vsrcs]
        + [f"i({e.name})" for e in inductors]
    )
    floating = [labels[row] for row in range(n) if not C[row].any() and not G[row].any()]
    if floating:
        raise StampError(f"floating node(s) with no connection to the rest of the circuit: {', '.join(floating)}")

    logger.info(
        f"Stamped netlist: {n_nodes} node voltages, {len(vsrcs)} source currents, "
        f"{len(inductors)} inductor currents, omega={omega:g}"
    )
    return LinearDae(C=C, G=G, source=SinusoidalSource(b_c, b_s, omega), labels=tuple(labels))
