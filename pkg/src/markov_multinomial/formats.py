"""
Text formats: model files, CSV outputs, path and count files.

Model file
----------
A line-oriented declarative format. ``#`` starts a comment. Example::

    states: S1, S2, S3, S4
    initial: S1=10000
    horizon: 50
    cycle_length: 1
    seed: 20240611

    S1 -> S2: 0.1
    S1 -> S3: 0.05
    S1 -> S4: 0.14

Keys: ``states`` (required), ``initial`` (required; ``label=count`` pairs,
unlisted states start empty), ``horizon`` (required), ``n0`` (optional,
checked against ``initial``), ``cycle_length`` (default 1), ``seed``
(optional default RNG seed), ``hold_last`` (``true``/``false``).

Transition records ``A -> B: p`` fill one matrix. A row's self-transition
is implied as one minus the rest of the row unless the row has an
explicit ``A -> A`` record, in which case the row must sum to one. Rows
may also be given densely as ``row A: p1 p2 ... ps``. Rows without any
record are absorbing.

Time-varying schedules split records into blocks headed ``matrix 1:``,
``matrix 2:`` ...; matrix ``K`` governs the transition into cycle ``K``.
With a single matrix ``hold_last`` defaults to true, otherwise false.

Numbers are written with ``repr``, the shortest text that parses back to
the same double, so a written model re-reads identically.
"""

import csv
import hashlib
import io
import os
import re
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import CohortSpec, StateSpace, STOCHASTIC_TOL, validate_schedule
from .errors import ModelError, NegativeResidualError, NotStochasticError

__all__ = [
    "SCHEMA",
    "ModelFileSyntaxError",
    "ModelFile",
    "parse_model",
    "load_model",
    "format_model",
    "format_number",
    "atomic_open",
    "atomic_write",
    "csv_text",
    "read_csv_with_meta",
    "text_digest",
]

SCHEMA = "markov-multinomial/1"

_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*[:=]\s*(.*)$")
_TRANSITION_RE = re.compile(r"^(.+?)\s*->\s*(.+?)\s*[:=]\s*(\S+)$")
_ROW_RE = re.compile(r"^row\s+(.+?)\s*[:=]\s*(.*)$")
_MATRIX_RE = re.compile(r"^matrix\s+(\S+?)\s*:?$")
_KEYS = {"states", "initial", "n0", "horizon", "cycle_length", "seed", "hold_last"}


class ModelFileSyntaxError(Exception):
    """A model or data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class ModelFile:
    spec: CohortSpec
    seed: Optional[int] = None

    def __eq__(self, other):
        if not isinstance(other, ModelFile):
            return NotImplemented
        return self.spec == other.spec and self.seed == other.seed

    __hash__ = None


def _number(text, lineno, what):
    try:
        return float(text)
    except ValueError:
        raise ModelFileSyntaxError(f"{what}: {text!r} is not a number", lineno) from None


def _integer(text, lineno, what):
    try:
        return int(text)
    except ValueError:
        raise ModelFileSyntaxError(f"{what}: {text!r} is not an integer", lineno) from None


def _boolean(text, lineno, what):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ModelFileSyntaxError(f"{what}: {text!r} is not true/false", lineno)


def parse_model(text: str, hold_last: Optional[bool] = None,
                renormalize: bool = False) -> ModelFile:
    """Parse model-file text into a validated :class:`ModelFile`.

    ``hold_last`` overrides the file's setting when given.

    Raises
    ------
    ModelFileSyntaxError
        Malformed lines, unknown keys, non-numeric values.
    ModelError
        Well-formed but invalid content (unknown states, probabilities
        outside [0, 1], rows that do not sum to one, ...).
    """
    keys: Dict[str, Tuple[str, int]] = {}
    # blocks[k] = list of (lineno, kind, payload)
    blocks: List[list] = [[]]
    explicit_blocks = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _MATRIX_RE.match(line)
        if m:
            number = _integer(m.group(1), lineno, "matrix header")
            if not explicit_blocks:
                if blocks[0]:
                    raise ModelFileSyntaxError(
                        "transitions appear before the first 'matrix' header", lineno)
                blocks = []
                explicit_blocks = True
            if number != len(blocks) + 1:
                raise ModelFileSyntaxError(
                    f"expected 'matrix {len(blocks) + 1}', got 'matrix {number}'", lineno)
            blocks.append([])
            continue
        m = _ROW_RE.match(line)
        if m:
            blocks[-1].append((lineno, "row", (m.group(1).strip(), m.group(2).split())))
            continue
        m = _TRANSITION_RE.match(line)
        if m:
            src, dst, value = m.groups()
            blocks[-1].append((lineno, "edge", (src.strip(), dst.strip(), value)))
            continue
        m = _KEY_RE.match(line)
        if m:
            key, value = m.group(1).lower(), m.group(2).strip()
            if key not in _KEYS:
                raise ModelFileSyntaxError(f"unknown key {key!r}", lineno)
            if key in keys:
                raise ModelFileSyntaxError(f"duplicate key {key!r}", lineno)
            keys[key] = (value, lineno)
            continue
        raise ModelFileSyntaxError(f"cannot parse {raw.strip()!r}", lineno)

    for required in ("states", "initial", "horizon"):
        if required not in keys:
            raise ModelFileSyntaxError(f"missing required key {required!r}")

    value, lineno = keys["states"]
    labels = [label.strip() for label in value.split(",")]
    if any(not label for label in labels):
        raise ModelFileSyntaxError("empty state label", lineno)
    space = StateSpace(tuple(labels))
    s = space.s

    def lookup(label, lineno, record):
        if label not in space.labels:
            raise ModelError(f"line {lineno}: {record}: unknown state {label!r}")
        return space.labels.index(label)

    value, lineno = keys["initial"]
    counts = np.zeros(s, dtype=np.int64)
    seen = set()
    for item in filter(None, (part.strip() for part in value.split(","))):
        if "=" not in item:
            raise ModelFileSyntaxError(f"initial: expected label=count, got {item!r}", lineno)
        label, n = (part.strip() for part in item.split("=", 1))
        k = lookup(label, lineno, "initial")
        if k in seen:
            raise ModelError(f"line {lineno}: initial: state {label!r} listed twice")
        seen.add(k)
        n = _integer(n, lineno, f"initial count for {label}")
        if n < 0:
            raise ModelError(f"line {lineno}: initial count for {label!r} is negative")
        counts[k] = n

    horizon = _integer(keys["horizon"][0], keys["horizon"][1], "horizon")
    n0 = _integer(keys["n0"][0], keys["n0"][1], "n0") if "n0" in keys else None
    cycle_length = (_number(keys["cycle_length"][0], keys["cycle_length"][1], "cycle_length")
                    if "cycle_length" in keys else 1.0)
    seed = _integer(keys["seed"][0], keys["seed"][1], "seed") if "seed" in keys else None
    if hold_last is None and "hold_last" in keys:
        hold_last = _boolean(keys["hold_last"][0], keys["hold_last"][1], "hold_last")
    if explicit_blocks and not blocks:
        raise ModelFileSyntaxError("no matrix blocks")

    raw = [_block_matrix(block, k + 1, space, lookup, renormalize)
           for k, block in enumerate(blocks)]
    try:
        schedule = validate_schedule(raw, s, hold_last=hold_last, renormalize=renormalize)
    except ModelError as exc:
        raise type(exc)(_label_rows(str(exc), space)) from None
    spec = CohortSpec(space, schedule, counts, horizon=horizon,
                      cycle_length=cycle_length, n0=n0)
    return ModelFile(spec, seed)


def _label_rows(message, space):
    # core reports zero-based "matrix k, row i"; rewrite in file terms
    def repl(m):
        return f"matrix {int(m.group(1)) + 1}, row {space.labels[int(m.group(2))]}"
    return re.sub(r"matrix (\d+), row (\d+)", repl, message)


def _block_matrix(block, number, space, lookup, renormalize=False):
    s = space.s
    mat = np.zeros((s, s))
    explicit = np.zeros(s, dtype=bool)
    filled = np.zeros((s, s), dtype=bool)
    row_lines: Dict[int, List[int]] = {}
    for lineno, kind, payload in block:
        if kind == "edge":
            src, dst, value = payload
            record = f"transition {src} -> {dst}"
            k, l = lookup(src, lineno, record), lookup(dst, lineno, record)
            p = _number(value, lineno, record)
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"line {lineno}: {record}: probability {value} is outside [0, 1]")
            if filled[k, l]:
                raise ModelError(f"line {lineno}: {record} given twice in matrix {number}")
            mat[k, l] = p
            filled[k, l] = True
            if k == l:
                explicit[k] = True
        else:
            src, values = payload
            record = f"row {src}"
            k = lookup(src, lineno, record)
            if len(values) != s:
                raise ModelError(f"line {lineno}: {record}: expected {s} values, got {len(values)}")
            probs = [_number(v, lineno, record) for v in values]
            if any(not 0.0 <= p <= 1.0 for p in probs):
                raise ModelError(f"line {lineno}: {record}: probabilities must lie in [0, 1]")
            if filled[k].any():
                raise ModelError(f"line {lineno}: {record} overlaps earlier records for {src}")
            mat[k] = probs
            filled[k] = True
            explicit[k] = True
        row_lines.setdefault(k, []).append(lineno)
    for k in range(s):
        lines = row_lines.get(k, [])
        where = ("line " if len(lines) == 1 else "lines ") + ", ".join(map(str, lines))
        total = float(mat[k].sum())
        if explicit[k]:
            if abs(total - 1.0) > STOCHASTIC_TOL and not renormalize:
                raise NotStochasticError(
                    f"{where}: matrix {number}, row {space.labels[k]} "
                    f"sums to {total!r}, not 1"
                )
        else:
            if total > 1.0 + STOCHASTIC_TOL and not renormalize:
                raise NegativeResidualError(
                    f"{where}: matrix {number}, row {space.labels[k]}: "
                    f"transitions sum to {total!r} > 1"
                )
            mat[k, k] = np.nan
    return mat


def load_model(path, hold_last: Optional[bool] = None, renormalize: bool = False) -> ModelFile:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), hold_last=hold_last, renormalize=renormalize)


def format_number(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def format_model(model: ModelFile) -> str:
    """Model-file text that parses back to ``model`` exactly."""
    spec = model.spec
    labels = spec.state_space.labels
    lines = [
        f"# {SCHEMA} model",
        f"states: {', '.join(labels)}",
        "initial: " + ", ".join(f"{labels[k]}={int(n)}"
                                for k, n in enumerate(spec.initial_counts) if n),
        f"n0: {spec.n0}",
        f"horizon: {spec.horizon}",
        f"cycle_length: {format_number(spec.cycle_length)}",
        f"hold_last: {'true' if spec.schedule.hold_last else 'false'}",
    ]
    if model.seed is not None:
        lines.append(f"seed: {model.seed}")
    multi = len(spec.schedule) > 1
    for number, P in enumerate(spec.schedule.matrices, start=1):
        lines.append("")
        if multi:
            lines.append(f"matrix {number}:")
        for k in range(spec.s):
            for l in range(spec.s):
                if l == k or P[k, l] != 0.0:
                    lines.append(f"{labels[k]} -> {labels[l]}: {format_number(P[k, l])}")
    return "\n".join(lines) + "\n"


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def csv_text(meta: Sequence[Tuple[str, object]], header: Sequence[str],
             rows: Iterable[Sequence]) -> str:
    """CSV with ``# key: value`` metadata lines ahead of the header row."""
    buf = io.StringIO()
    for key, value in meta:
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buf.getvalue()


@contextmanager
def atomic_open(path):
    """Open a temporary sibling of ``path`` for writing; rename on success.

    On any error the temporary file is removed and ``path`` is untouched.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write(path, text: str) -> None:
    with atomic_open(path) as fh:
        fh.write(text)


def read_csv_with_meta(text: str) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """Split a CSV produced by :func:`csv_text` into (meta, header, rows)."""
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        return meta, [], []
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    return meta, header, [row for row in reader]
