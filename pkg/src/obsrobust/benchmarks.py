"""Built-in benchmark models and their controllers."""
import numpy as np

from . import errors
from .pomdp import Fsc, Pomdp

BENCHMARKS = ("toy-rover", "rover-nav", "cancer", "part-qc-policy1", "part-qc-policy2",
              "tiger", "baby")

SANDS = ("large-smooth", "large-angular", "small-smooth", "small-angular")
TRAVERSABLE = ("large-smooth", "small-angular")


def fill_silent_rows(Z):
    """Rows with no observation mass get a point mass on the first observation.

    The benchmark definitions leave Z unspecified for actions that carry no
    sensing (moves, accept/reject) and for absorbing states.
    """
    Z = np.array(Z, dtype=float)
    empty = Z.sum(axis=2) == 0
    Z[empty, 0] = 1.0
    return Z


def make_fsc(m, nodes, initial=None):
    """nodes: list of (name, action name, {observation name: successor name})."""
    names = [n for n, _, _ in nodes]
    act = np.array([m.action_index(a) for _, a, _ in nodes])
    nxt = -np.ones((len(nodes), m.n_observations), dtype=np.int64)
    for i, (_, _, edges) in enumerate(nodes):
        for o, n2 in edges.items():
            nxt[i, m.observation_index(o)] = names.index(n2)
    return Fsc(names, names.index(initial) if initial else 0, act, nxt)


def _sand_z(m_actions, sand_of, states, obs=("true", "false")):
    """Size / texture sensors with 0.99 accuracy."""
    nA, nS = len(m_actions), len(states)
    Z = np.zeros((nA, nS, len(obs)))
    for s, name in enumerate(states):
        sand = sand_of(name)
        if sand is None:
            continue
        size, texture = sand.split("-")
        for a, sense, truth in (("measure-size", size, "large"), ("measure-texture", texture, "smooth")):
            ai = m_actions.index(a)
            Z[ai, s] = (0.99, 0.01) if sense == truth else (0.01, 0.99)
    return Z


def toy_rover():
    S = ("terminal",) + SANDS
    A = ("measure-size", "measure-texture", "go-through", "go-around")
    O = ("true", "false")
    nS, nA = len(S), len(A)
    T = np.zeros((nS, nA, nS))
    R = np.zeros((nS, nA))
    for s in range(nS):
        for a, act in enumerate(A):
            if s == 0 or act.startswith("go"):
                T[s, a, 0] = 1.0
            else:
                T[s, a, s] = 1.0
        if s:
            R[s, A.index("go-around")] = 0.9
            if S[s] in TRAVERSABLE:
                R[s, A.index("go-through")] = 1.0
    Z = fill_silent_rows(_sand_z(A, lambda n: n if n in SANDS else None, S, O))
    b0 = np.array([0.0, 0.25, 0.25, 0.25, 0.25])
    m = Pomdp(S, A, O, T, Z, R, 0.99, b0, horizon=5)
    done = {"true": None, "false": None}
    fsc = make_fsc(m, [
        ("N1", "measure-size", {"true": "N2", "false": "N3"}),
        ("N2", "measure-texture", {"true": "N4", "false": "N5"}),
        ("N3", "measure-texture", {"true": "N6", "false": "N7"}),
        ("N4", "go-through", {o: "N4" for o in done}),
        ("N5", "go-around", {o: "N5" for o in done}),
        ("N6", "go-around", {o: "N6" for o in done}),
        ("N7", "go-through", {o: "N7" for o in done}),
    ])
    return m, fsc


GRID_X, GRID_Y = 3, 5
SAND_CELLS = ((1, 3), (1, 4))
EXIT_CELL = (1, 5)
ROVER_START = (1, 1)
ROVER_GOAL = (1, 5)
MOVES = {"up": (0, 1), "down": (0, -1), "left": (-1, 0), "right": (1, 0)}


def rover_nav():
    """Grid rover: short sandy corridor vs. a longer detour with left moves.

    Moves leaving the grid are no-ops. The start and goal cells sit at the
    two ends of the sand column (see the decisions ledger for the layout).
    """
    cells = [(x, y) for x in range(1, GRID_X + 1) for y in range(1, GRID_Y + 1)]
    S = ("terminal",) + tuple(f"{sand}@{x},{y}" for sand in SANDS for x, y in cells)
    A = ("measure-size", "measure-texture", "up", "down", "right", "left")
    O = ("true", "false")
    index = {name: i for i, name in enumerate(S)}
    nS, nA = len(S), len(A)

    def parse(name):
        sand, pos = name.split("@")
        x, y = pos.split(",")
        return sand, (int(x), int(y))

    T = np.zeros((nS, nA, nS))
    R = np.zeros((nS, nA))
    T[0, :, 0] = 1.0
    for s in range(1, nS):
        sand, pos = parse(S[s])
        for a, act in enumerate(A):
            if pos == EXIT_CELL or (pos in SAND_CELLS and sand not in TRAVERSABLE):
                T[s, a, 0] = 1.0
                continue
            d = MOVES.get(act, (0, 0))
            nxt = (pos[0] + d[0], pos[1] + d[1])
            if not (1 <= nxt[0] <= GRID_X and 1 <= nxt[1] <= GRID_Y):
                nxt = pos
            T[s, a, index[f"{sand}@{nxt[0]},{nxt[1]}"]] = 1.0
        for a, act in enumerate(A):
            if pos == ROVER_GOAL:
                R[s, a] = 1.0
            elif act == "left":
                R[s, a] = -0.1
    Z = fill_silent_rows(_sand_z(A, lambda n: parse(n)[0] if "@" in n else None, S, O))
    b0 = np.zeros(nS)
    for sand in SANDS:
        b0[index[f"{sand}@{ROVER_START[0]},{ROVER_START[1]}"]] = 0.25
    m = Pomdp(S, A, O, T, Z, R, 0.99, b0, horizon=50)

    def chain(prefix, acts, last):
        names = [f"{prefix}{i + 1}" for i in range(len(acts))]
        out = []
        for i, (nm, act) in enumerate(zip(names, acts)):
            nxt = names[i + 1] if i + 1 < len(names) else last
            out.append((nm, act, {"true": nxt}))
        return out

    through = ["up"] * 4
    around = ["right", "right", "up", "up", "up", "up", "left", "left"]
    nodes = [
        ("N1", "measure-size", {"true": "N2", "false": "N3"}),
        ("N2", "measure-texture", {"true": "through1", "false": "around1"}),
        ("N3", "measure-texture", {"true": "around1", "false": "through1"}),
    ]
    nodes += chain("through", through, "done")
    nodes += chain("around", around, "done")
    nodes.append(("done", "measure-size", {"true": "done", "false": "done"}))
    return m, make_fsc(m, nodes)


def cancer():
    S = ("healthy", "in-situ", "invasive", "death")
    A = ("wait", "test", "treat")
    O = ("positive", "negative", "dead")
    h, i, v, d = range(4)
    wait, test, treat = range(3)
    T = np.zeros((4, 3, 4))
    for a in range(3):
        T[h, a, i] = 0.02
        T[h, a, h] = 0.98
        T[d, a, d] = 1.0
    for a in (wait, test):
        T[i, a, v], T[i, a, i] = 0.1, 0.9
        T[v, a, d], T[v, a, v] = 0.6, 0.4
    T[i, treat, i], T[i, treat, h] = 0.4, 0.6
    T[v, treat, h], T[v, treat, d], T[v, treat, v] = 0.2, 0.2, 0.6
    Z = np.zeros((3, 4, 3))
    pos, neg, dead = range(3)
    Z[wait, :, neg] = 1.0
    Z[test, h, pos], Z[test, h, neg] = 0.05, 0.95
    Z[test, i, pos], Z[test, i, neg] = 0.8, 0.2
    Z[test, v, pos] = 1.0
    Z[treat, h, neg] = 1.0
    Z[treat, i, pos] = Z[treat, v, pos] = 1.0
    Z[:, d, :] = 0.0
    Z[:, d, dead] = 1.0
    R = np.zeros((4, 3))
    R[:3, wait], R[:3, test], R[:3, treat] = 1.0, 0.8, 0.1
    b0 = np.array([1.0, 0.0, 0.0, 0.0])
    m = Pomdp(S, A, O, T, Z, R, 0.999, b0, horizon=None)
    to_dead = {"dead": "dead"}
    nodes = [
        ("wait1", "wait", {"negative": "wait2", **to_dead}),
        ("wait2", "wait", {"negative": "wait3", **to_dead}),
        ("wait3", "wait", {"negative": "wait4", **to_dead}),
        ("wait4", "wait", {"negative": "test", **to_dead}),
        ("test", "test", {"positive": "test-pos", "negative": "test-neg", **to_dead}),
        # disagreeing results restart the pair of tests
        ("test-pos", "test", {"positive": "treat", "negative": "test", **to_dead}),
        ("test-neg", "test", {"positive": "test", "negative": "wait1", **to_dead}),
        ("treat", "treat", {"positive": "wait1", "negative": "wait1", **to_dead}),
        ("dead", "wait", {"positive": "dead", "negative": "dead", "dead": "dead"}),
    ]
    return m, make_fsc(m, nodes)


AC_POLICY1 = 0.99
AC_POLICY2 = 0.90234


def part_qc_model(ac):
    S = ("terminal", "passing", "failing")
    A = ("measure", "accept", "reject")
    O = ("pass", "fail")
    T = np.zeros((3, 3, 3))
    for s in range(3):
        T[s, 0, s] = 1.0
        T[s, 1, 0] = T[s, 2, 0] = 1.0
    Z = np.zeros((3, 3, 2))
    Z[0, 1] = (ac, 1 - ac)
    Z[0, 2] = (1 - ac, ac)
    Z = fill_silent_rows(Z)
    R = np.zeros((3, 3))
    R[2, 1] = -1.0
    b0 = np.array([0.0, 0.5, 0.5])
    return Pomdp(S, A, O, T, Z, R, 1.0, b0, horizon=200)


def part_qc_policy1():
    m = part_qc_model(AC_POLICY1)
    back = {"pass": "measure", "fail": "measure"}
    return m, make_fsc(m, [
        ("measure", "measure", {"pass": "accept", "fail": "measure-again"}),
        ("measure-again", "measure", {"pass": "accept", "fail": "reject"}),
        ("accept", "accept", back),
        ("reject", "reject", back),
    ])


def part_qc_policy2():
    m = part_qc_model(AC_POLICY2)
    back = {"pass": "measure", "fail": "measure"}
    return m, make_fsc(m, [
        ("measure", "measure", {"pass": "last-pass", "fail": "last-fail"}),
        ("last-pass", "measure", {"pass": "accept", "fail": "last-fail"}),
        ("last-fail", "measure", {"pass": "last-pass", "fail": "reject"}),
        ("accept", "accept", back),
        ("reject", "reject", back),
    ])


def tiger():
    S = ("tiger-left", "tiger-right")
    A = ("listen", "open-left", "open-right")
    O = ("hear-left", "hear-right")
    T = np.zeros((2, 3, 2))
    T[:, 0, :] = np.eye(2)
    T[:, 1:, :] = 0.5
    Z = np.zeros((3, 2, 2))
    Z[0] = [[0.85, 0.15], [0.15, 0.85]]
    Z[1:] = 0.5
    R = np.array([[-1.0, -100.0, 10.0], [-1.0, 10.0, -100.0]])
    m = Pomdp(S, A, O, T, Z, R, 0.95, [0.5, 0.5], horizon=None)
    back = {"hear-left": "listen", "hear-right": "listen"}
    # listen until two consecutive observations agree, then open the other door
    return m, make_fsc(m, [
        ("listen", "listen", {"hear-left": "heard-left", "hear-right": "heard-right"}),
        ("heard-left", "listen", {"hear-left": "open-right", "hear-right": "heard-right"}),
        ("heard-right", "listen", {"hear-left": "heard-left", "hear-right": "open-left"}),
        ("open-left", "open-left", back),
        ("open-right", "open-right", back),
    ])


def baby():
    S = ("sated", "hungry")
    A = ("feed", "ignore")
    O = ("crying", "quiet")
    T = np.zeros((2, 2, 2))
    T[:, 0, 0] = 1.0
    T[0, 1] = (0.9, 0.1)
    T[1, 1] = (0.0, 1.0)
    Z = np.zeros((2, 2, 2))
    Z[:, 0] = (0.1, 0.9)
    Z[:, 1] = (0.8, 0.2)
    R = np.array([[-5.0, 0.0], [-15.0, -10.0]])
    m = Pomdp(S, A, O, T, Z, R, 0.9, [1.0, 0.0], horizon=None)
    return m, make_fsc(m, [
        ("ignore", "ignore", {"crying": "feed", "quiet": "ignore"}),
        ("feed", "feed", {"crying": "feed", "quiet": "ignore"}),
    ])


_BUILDERS = {
    "toy-rover": toy_rover,
    "rover-nav": rover_nav,
    "cancer": cancer,
    "part-qc-policy1": part_qc_policy1,
    "part-qc-policy2": part_qc_policy2,
    "tiger": tiger,
    "baby": baby,
}


def builtin(name):
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise errors.UnknownBenchmark(
            f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}") from None
