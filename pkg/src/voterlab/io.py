"""JSON/CSV readers and writers for matrices, graphs, reports and mu specs.

Floats are written with ``repr`` (shortest round-tripping form), so a write
followed by a read reproduces every value bit for bit.
"""
import csv
import json

import numpy as np

from .errors import DomainError
from .model import Graph, InteractionMatrix, as_matrix
from .simulate import InitialDistribution, str_to_bits


def _plain(obj):
    """Recursively turn numpy containers and scalars into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=1)


def write_json(obj, path):
    text = dumps(obj) + "\n"
    if path is None or path == "-":
        print(text, end="")
        return
    with open(path, "w") as fh:
        fh.write(text)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def matrix_to_dict(A):
    A = as_matrix(A)
    return {"n": int(A.shape[0]), "rows": A.tolist()}


def matrix_from_dict(d, allow_periodic=False):
    try:
        n, rows = int(d["n"]), d["rows"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"matrix file needs 'n' and 'rows': {exc}") from exc
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape != (n, n):
        raise DomainError(f"rows have shape {rows.shape}, expected ({n}, {n})")
    return InteractionMatrix(rows, allow_periodic=allow_periodic)


def write_matrix(A, path):
    write_json(matrix_to_dict(A), path)


def read_matrix(path, allow_periodic=False):
    return matrix_from_dict(read_json(path), allow_periodic)


def graph_to_dict(g):
    return {"n": g.n, "edges": [list(e) for e in g.proper_edges],
            "self_loops": list(g.self_loops)}


def graph_from_dict(d):
    try:
        n = int(d["n"])
        edges = [tuple(e) for e in d.get("edges", [])]
        loops = [(int(u), int(u)) for u in d.get("self_loops", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"bad graph file: {exc}") from exc
    return Graph(n, tuple(edges) + tuple(loops))


def write_graph(g, path):
    write_json(graph_to_dict(g), path)


def read_graph(path):
    return graph_from_dict(read_json(path))


def parse_mu(spec):
    """Initial distribution from a JSON string or dict.

    Accepted forms: {"bernoulli": p, "exclude_consensus": bool},
    {"fixed": "0110"} and {"uniform_transient": true}.
    """
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise DomainError(f"mu is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise DomainError("mu must be a JSON object")
    if "bernoulli" in spec:
        return InitialDistribution.product_bernoulli(
            float(spec["bernoulli"]), bool(spec.get("exclude_consensus", False)))
    if "fixed" in spec:
        x = spec["fixed"]
        x = str_to_bits(x) if isinstance(x, str) else np.asarray(x, np.uint8)
        return InitialDistribution.fixed(x)
    if spec.get("uniform_transient"):
        return InitialDistribution.uniform_over_transients()
    raise DomainError(f"unrecognised mu spec {spec!r}")


def write_csv(rows, header, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                        else v for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
