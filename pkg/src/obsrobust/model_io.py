"""Text formats for models, controllers and results."""
import csv
import io
import json
import math
from importlib import resources

import numpy as np

from . import errors
from .benchmarks import BENCHMARKS, builtin
from .chains import build_product_mc
from .pomdp import TOL, Fsc, Pomdp, validate_model
from .robust_eval import WorstCaseWitness

__all__ = ["parse_pomdp", "write_pomdp", "parse_fsc", "write_fsc", "builtin", "BENCHMARKS",
           "write_result", "read_result", "write_report", "load_fixture"]

# rows this close to 1 are left as written so that write/parse round-trips bit for bit
EXACT = 1e-12


def _num(x):
    return format(float(x), ".17g")


def _short(x):
    return repr(float(x))


def _lines(text):
    for i, raw in enumerate(text.replace("\r\n", "\n").replace("\r", "\n").split("\n"), 1):
        body = raw.split("#", 1)[0]
        if body.strip():
            yield i, body


def _col(body, token):
    return body.rfind(token) + 1 if token else len(body) + 1


def _float(tok, line, body, what="a number"):
    try:
        v = float(tok)
    except ValueError:
        raise errors.SyntaxError(line, _col(body, tok), what, tok) from None
    if not math.isfinite(v):
        raise errors.SyntaxError(line, _col(body, tok), "a finite number", tok)
    return v


def _lookup(names, tok, kind, line):
    if tok in names:
        return names.index(tok)
    # a bare index refers to the declaration order, unless a name shadows it
    if tok.isdigit() and int(tok) < len(names):
        return int(tok)
    raise errors.SemanticError(f"line {line}: unknown {kind} {tok!r}")


def _fields(body, line, n_sep):
    """Split 'X: a : b : c value' into the n_sep + 1 ':'-separated names and the value."""
    parts = body.split(":")[1:]
    if len(parts) != n_sep + 1:
        raise errors.SyntaxError(line, len(body.rstrip()) + 1, f"{n_sep} ':' separators after the key",
                                 body.strip())
    head = [p.strip() for p in parts[:-1]]
    tail = parts[-1].split()
    if len(tail) != 2 or not all(head):
        at = parts[-1].strip()
        col = body.rfind(at) + 1 if at else len(body.rstrip()) + 1
        raise errors.SyntaxError(line, col, "<name> <number>", at)
    return head + tail


def _normalize(arr, axis_label, names_fn):
    """Renormalize rows within TOL of the simplex once; reject the rest."""
    sums = arr.sum(axis=-1)
    for idx in zip(*np.nonzero(np.abs(sums - 1.0) > EXACT)):
        t = sums[idx]
        if abs(t - 1.0) > TOL:
            raise errors.SemanticError(f"{axis_label}{names_fn(idx)} sums to {t:.12g}")
        arr[idx] = arr[idx] / t
    return arr


def parse_pomdp(text):
    """Parse the line-oriented POMDP format (see write_pomdp for an example)."""
    decl = {}
    entries = []
    for line, body in _lines(text):
        key, sep, rest = body.partition(":")
        key = key.strip()
        if not sep:
            raise errors.SyntaxError(line, 1, "'<section>:'", body.strip())
        if key in ("states", "actions", "observations"):
            names = rest.split()
            if not names:
                raise errors.SyntaxError(line, len(body) + 1, "at least one name")
            if len(set(names)) != len(names):
                raise errors.SemanticError(f"line {line}: duplicate name in {key}")
            decl[key] = names
        elif key == "discount":
            decl[key] = _float(rest.strip(), line, body)
        elif key == "horizon":
            tok = rest.strip()
            if tok.lower() in ("inf", "infinite"):
                decl[key] = None
            elif tok.isdigit():
                decl[key] = int(tok)
            else:
                raise errors.SyntaxError(line, _col(body, tok), "'inf' or a non-negative integer", tok)
        elif key == "start":
            decl[key] = (line, body, rest.split())
        elif key in ("T", "Z", "R"):
            entries.append((key, line, body))
        else:
            raise errors.SyntaxError(line, 1, "one of states, actions, observations, discount, "
                                     "horizon, start, T, Z, R", key)
    for k in ("states", "actions", "observations", "discount"):
        if k not in decl:
            raise errors.SemanticError(f"missing '{k}:' section")
    S, A, O = decl["states"], decl["actions"], decl["observations"]
    T = np.zeros((len(S), len(A), len(S)))
    Z = np.zeros((len(A), len(S), len(O)))
    R = np.zeros((len(S), len(A)))
    for key, line, body in entries:
        if key == "R":
            s, a, v = _fields(body, line, 1)
            R[_lookup(S, s, "state", line), _lookup(A, a, "action", line)] = _float(v, line, body)
            continue
        a, x, y, v = _fields(body, line, 2)
        p = _float(v, line, body, "a probability")
        if not -TOL <= p <= 1 + TOL:
            raise errors.SemanticError(f"line {line}: probability {p} outside [0, 1]")
        ai = _lookup(A, a, "action", line)
        if key == "T":
            T[_lookup(S, x, "state", line), ai, _lookup(S, y, "state", line)] = p
        else:
            Z[ai, _lookup(S, x, "state", line), _lookup(O, y, "observation", line)] = p
    if "start" not in decl:
        raise errors.SemanticError("missing 'start:' section")
    line, body, toks = decl["start"]
    if toks == ["uniform"]:
        b0 = np.full(len(S), 1.0 / len(S))
    else:
        if len(toks) != len(S):
            raise errors.SyntaxError(line, len(body) + 1, f"{len(S)} probabilities or 'uniform'")
        b0 = np.array([_float(t, line, body) for t in toks])
    T = _normalize(T, "T", lambda i: f"({S[i[0]]}, {A[i[1]]})")
    Z = _normalize(Z, "Z", lambda i: f"({A[i[0]]}, {S[i[1]]})")
    b0 = _normalize(b0[None], "start", lambda i: "")[0]
    m = Pomdp(S, A, O, T, Z, R, decl["discount"], b0, horizon=decl.get("horizon"))
    problems = validate_model(m)
    if problems:
        raise errors.SemanticError("; ".join(problems))
    return m


def write_pomdp(m):
    out = [f"states: {' '.join(m.states)}",
           f"actions: {' '.join(m.actions)}",
           f"observations: {' '.join(m.observations)}",
           f"discount: {_short(m.discount)}",
           f"horizon: {'inf' if m.horizon is None else m.horizon}",
           f"start: {' '.join(_short(x) for x in m.b0)}"]
    for s, a, s2 in zip(*np.nonzero(m.T)):
        out.append(f"T: {m.actions[a]} : {m.states[s]} : {m.states[s2]} {_short(m.T[s, a, s2])}")
    for a, s2, o in zip(*np.nonzero(m.Z)):
        out.append(f"Z: {m.actions[a]} : {m.states[s2]} : {m.observations[o]} {_short(m.Z[a, s2, o])}")
    for s, a in zip(*np.nonzero(m.R)):
        out.append(f"R: {m.states[s]} : {m.actions[a]} {_short(m.R[s, a])}")
    return "\n".join(out) + "\n"


def parse_fsc(text, m):
    """Parse `node <name> action=<a> [initial]` blocks with `on <o> -> <node>` edges."""
    nodes, actions, edges = [], [], []
    initial = None
    for line, body in _lines(text):
        toks = body.split()
        if toks[0] == "node":
            if len(toks) not in (3, 4) or not toks[2].startswith("action="):
                raise errors.SyntaxError(line, _col(body, toks[-1]), "node <name> action=<a> [initial]",
                                         body.strip())
            if len(toks) == 4 and toks[3] != "initial":
                raise errors.SyntaxError(line, _col(body, toks[3]), "'initial'", toks[3])
            name, act = toks[1], toks[2][len("action="):]
            if name in nodes:
                raise errors.SemanticError(f"line {line}: node {name!r} declared twice")
            if act not in m.actions:
                raise errors.UnknownAction(f"line {line}: unknown action {act!r}")
            if len(toks) == 4:
                if initial is not None:
                    raise errors.SemanticError(f"line {line}: second initial node {name!r}")
                initial = len(nodes)
            nodes.append(name)
            actions.append(m.action_index(act))
        elif toks[0] == "on":
            if not nodes:
                raise errors.SyntaxError(line, 1, "'node' before any edge", toks[0])
            if len(toks) != 4 or toks[2] != "->":
                raise errors.SyntaxError(line, _col(body, toks[-1]), "on <observation> -> <node>",
                                         body.strip())
            if toks[1] not in m.observations:
                raise errors.UnknownObservation(f"line {line}: unknown observation {toks[1]!r}")
            edges.append((line, len(nodes) - 1, m.observation_index(toks[1]), toks[3]))
        else:
            raise errors.SyntaxError(line, _col(body, toks[0]), "'node' or 'on'", toks[0])
    if not nodes:
        raise errors.SemanticError("controller declares no nodes")
    nxt = -np.ones((len(nodes), m.n_observations), dtype=np.int64)
    for line, n, o, target in edges:
        if target not in nodes:
            raise errors.SemanticError(f"line {line}: unknown node {target!r}")
        if nxt[n, o] >= 0:
            raise errors.DuplicateEdge(
                f"line {line}: node {nodes[n]!r} already has an edge on {m.observations[o]!r}")
        nxt[n, o] = nodes.index(target)
    pi = Fsc(nodes, 0 if initial is None else initial, np.array(actions), nxt)
    return Fsc(pi.nodes, pi.initial, pi.action, pi.next_node, tuple(_fsc_warnings(m, pi)))


def _fsc_warnings(m, pi):
    out = []
    reach = pi.reachable_nodes()
    for n in range(pi.n_nodes):
        if n not in reach:
            out.append(f"node {pi.nodes[n]!r} is unreachable from the initial node")
    try:
        c = build_product_mc(m, pi)
    except errors.ModelError:
        return out
    live = c.reachable()
    nN = pi.n_nodes
    possible = np.zeros((nN, m.n_observations), dtype=bool)
    for q in np.flatnonzero(live[1:]) + 1:
        s, n = divmod(int(q) - 1, nN)
        a = pi.action[n]
        s2 = np.flatnonzero(m.T[s, a] > 0)
        possible[n] |= (m.Z[a, s2] > 0).any(axis=0)
    for n in sorted(reach):
        if not live[1 + np.arange(m.n_states) * nN + n].any():
            continue
        for o in np.flatnonzero((pi.next_node[n] >= 0) & ~possible[n]):
            out.append(f"edge ({pi.nodes[n]}, {m.observations[o]}) lies outside the observation support")
    return out


def write_fsc(pi, m):
    out = []
    for n, name in enumerate(pi.nodes):
        tag = " initial" if n == pi.initial else ""
        out.append(f"node {name} action={m.actions[pi.action[n]]}{tag}")
        for o in range(m.n_observations):
            if pi.next_node[n, o] >= 0:
                out.append(f"  on {m.observations[o]} -> {pi.nodes[pi.next_node[n, o]]}")
    return "\n".join(out) + "\n"


def load_fixture(name):
    return resources.files("obsrobust").joinpath("data", name).read_text(encoding="utf-8")


# ---------------------------------------------------------------- results


def _dump(x, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return _num(x) if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        if not x:
            return "{}"
        body = f",\n{pad}".join(f"{json.dumps(k)}: {_dump(v, indent + 1)}" for k, v in x.items())
        return "{\n" + pad + body + "\n" + end + "}"
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, (list, tuple)):
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in x):
            return "[" + ", ".join(_dump(v) for v in x) + "]"
        return "[\n" + pad + f",\n{pad}".join(_dump(v, indent + 1) for v in x) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(x)}")


def _witness_json(w):
    if w is None:
        return None
    if isinstance(w, WorstCaseWitness):
        return {"kind": "kernel", "stationary": w.stationary,
                "value_at_initial": w.value_at_initial, "kernel": w.kernel}
    return {"kind": "parameters", "point": np.asarray(w, dtype=float)}


def _witness_from(d):
    if d is None:
        return None
    if d["kind"] == "parameters":
        return np.array(d["point"], dtype=float)
    k = d["kernel"]
    if k is not None:
        k = np.array(k, dtype=float) if d["stationary"] else [np.array(v, dtype=float) for v in k]
    return WorstCaseWitness(k, d["value_at_initial"])


def _result_dict(r):
    return {"delta": r.delta, "nominal_value": r.nominal_value,
            "worst_case_value": r.worst_case_value_at_delta, "variant": r.variant,
            "iterations": [list(t) for t in r.iterations], "witness": _witness_json(r.witness),
            "saturated": bool(r.saturated), "threshold": r.threshold}


CSV_COLUMNS = ("threshold", "delta", "nominal", "worst_case")


def write_result(r, fmt="json"):
    """Serialize one result (or a list of them, for sweeps) as JSON or CSV."""
    many = isinstance(r, (list, tuple))
    rs = list(r) if many else [r]
    if fmt == "json":
        return _dump([_result_dict(x) for x in rs] if many else _result_dict(r)) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for x in rs:
            w.writerow([_num(v) if v is not None else "" for v in
                        (x.threshold, x.delta, x.nominal_value, x.worst_case_value_at_delta)])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def read_result(text):
    """Inverse of write_result(r, 'json')."""
    from .search import RobustnessResult

    def one(d):
        return RobustnessResult(delta=d["delta"], nominal_value=d["nominal_value"],
                                worst_case_value_at_delta=d["worst_case_value"],
                                variant=d["variant"],
                                iterations=[tuple(t) for t in d["iterations"]],
                                witness=_witness_from(d["witness"]),
                                saturated=d.get("saturated", False), threshold=d.get("threshold"))
    data = json.loads(text)
    return [one(d) for d in data] if isinstance(data, list) else one(data)


def write_report(rep):
    return _dump({k: getattr(rep, k) for k in rep.__dataclass_fields__}) + "\n"


def write_value(value, table=None):
    return _dump({"nominal_value": value}) + "\n"
