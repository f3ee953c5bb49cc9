"""JSON and CSV interchange for samples, forms, directions and profiles.

Complex arrays are stored as lists of ``[re, im]`` pairs in column-major
order.  Python's ``repr``-based float formatting makes every round trip
bit-exact.
"""

import csv
import io
import json
import os
import tempfile

import numpy as np

from .errors import ValidationError
from .quantization import AnticanonicalSample, PolarizedSample


def _pairs(a):
    a = np.asarray(a, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in a.ravel(order="F")]


def _unpairs(pairs, shape, path):
    try:
        arr = np.array(pairs, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path} must be a list of [re, im] pairs",
                              invariant="schema", path=path) from exc
    n = int(np.prod(shape))
    if arr.shape != (n, 2):
        raise ValidationError(f"{path} needs {n} [re, im] pairs",
                              invariant="schema", path=path)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape, order="F")


def _field(doc, key, kind=None):
    if key not in doc:
        raise ValidationError(f"missing field {key!r}", invariant="schema",
                              path=f"/{key}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(f"field {key!r} has the wrong type",
                              invariant="schema", path=f"/{key}")
    return value


def _load(doc):
    if isinstance(doc, (str, bytes)):
        try:
            return json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", invariant="json",
                                  path="/") from exc
    return doc


# Samples


def sample_to_json(s):
    doc = {"label": s.label, "N": s.N, "M": s.M, "k": s.k, "n": s.n,
           "weights": [float(x) for x in s.weights]}
    if isinstance(s, AnticanonicalSample):
        doc["base"] = [float(x) for x in s.base]
    if s.allow_degenerate:
        doc["allow_degenerate"] = True
    doc["evals"] = _pairs(s.evals)
    return doc


def sample_from_json(doc):
    """Rebuild a :class:`PolarizedSample` (or anticanonical sample if ``base`` is present)."""
    doc = _load(doc)
    if not isinstance(doc, dict):
        raise ValidationError("sample document must be an object",
                              invariant="schema", path="/")
    n_sec = _field(doc, "N", int)
    n_pts = _field(doc, "M", int)
    weights = _field(doc, "weights", list)
    evals = _unpairs(_field(doc, "evals", list), (n_sec, n_pts), "/evals")
    kw = dict(evals=evals, weights=np.array(weights, dtype=float),
              k=int(doc.get("k", 1)), n=int(doc.get("n", 1)),
              label=str(doc.get("label", "")),
              allow_degenerate=bool(doc.get("allow_degenerate", False)))
    if doc.get("base") is not None:
        return AnticanonicalSample(base=np.array(doc["base"], dtype=float), **kw)
    return PolarizedSample(**kw)


# Square matrices (forms and directions)


def matrix_to_json(a):
    a = np.asarray(a, dtype=complex)
    return {"N": a.shape[0], "entries": _pairs(a)}


def matrix_from_json(doc):
    doc = _load(doc)
    if not isinstance(doc, dict):
        raise ValidationError("matrix document must be an object",
                              invariant="schema", path="/")
    n = _field(doc, "N", int)
    return _unpairs(_field(doc, "entries", list), (n, n), "/entries")


def profile_from_json(doc):
    from .samples import MetricProfile

    doc = _load(doc)
    coeffs = _field(doc, "coeffs", list)
    return MetricProfile(tuple(float(c) for c in coeffs))


def curvature_csv(grid):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau", "S"])
    for t, v in zip(grid.nodes, grid.values):
        writer.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()


def rows_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


# Files


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return _load(fh.read())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}",
                              invariant="io", path=str(path)) from exc


def write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
