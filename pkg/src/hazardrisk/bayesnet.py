"""Declarative Bayesian networks over mixed node kinds, with ancestral sampling.

A network is declared as a list of node specs (dicts, as found in scenario
files, or node objects). Supported kinds:

``marginal``
    a fixed distribution, optionally switched by a categorical parent.
``categorical``
    labelled outcomes with a probability vector, or a conditional
    probability table over discrete parents.
``copula_group``
    several member variables drawn jointly from a :class:`JointModel`,
    optionally one joint model per label of a categorical switch parent.
``regression``
    a linear model over parent values plus a noise law, with an optional
    ``exp``/``abs`` output transform (``exp`` undoes a log-response fit).
``failure``
    a 0/1 failure indicator, optionally conditional on a common-cause parent.
``deterministic``
    a registered function or a restricted arithmetic expression of parents.
``injury``
    a registered injury model returning a probability; the risk output.

``marginal`` and ``regression`` nodes may name a ``failure`` parent; on
failure they emit ``sentinel`` (default 0) instead of a draw.

Randomness for node ``X`` in row block ``b`` comes from the stream
``(seed, "bn", X, b)``. Blocks have a fixed size, so the result does not
depend on the number of workers. Deterministic nodes draw nothing.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import dataclasses
import heapq
import io
import math

import numpy as np

from .dependence import JointModel, joint_from_dict, sample_conditional
from .doe import Term, parse_terms, regressor_matrix
from .errors import CycleError, EvaluationError, GraphError, ValidationError
from .expr import compile_expression
from .rng import stream
from .stats import (Distribution, FailureEvidence, estimate_failure_probability)

BLOCK_SIZE = 1 << 15

FUNCTIONS = {}
INJURY_MODELS = {}


def register_function(name, fn=None):
    """Register ``fn(*parent_values, **params)`` as a deterministic node function."""
    def deco(f):
        FUNCTIONS[name] = f
        return f
    return deco(fn) if fn is not None else deco


def register_injury_model(name, fn=None):
    def deco(f):
        INJURY_MODELS[name] = f
        return f
    return deco(fn) if fn is not None else deco


# -- nodes -----------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    name: str
    parents: tuple = ()

    kind = "node"
    stochastic = True
    discrete = False

    @property
    def outputs(self):
        return (self.name,)

    def validate(self, nodes):
        pass


def _discrete_parent(nodes, name, child):
    node = nodes.get(name)
    if node is None or not node.discrete:
        raise GraphError(f"node {child!r}: parent {name!r} must be categorical or failure")
    return node


def _apply_failure(values, env, failure, sentinel):
    if failure is None:
        return values
    return np.where(env[failure] == 1.0, sentinel, values)


def _failure_logpdf(lp, x, env, failure, sentinel):
    if failure is None:
        return lp
    failed = env[failure] == 1.0
    return np.where(failed, np.where(x == sentinel, 0.0, -np.inf), lp)


@dataclass(frozen=True)
class MarginalNode(Node):
    distribution: Distribution = None
    switch: str | None = None
    distributions: tuple = ()
    failure: str | None = None
    sentinel: float = 0.0

    kind = "marginal"

    @property
    def discrete(self):
        return self.distribution is not None and self.distribution.is_discrete

    @property
    def cardinality(self):
        return len(self.distribution.params)

    def validate(self, nodes):
        expected = {p for p in (self.switch, self.failure) if p}
        if set(self.parents) != expected:
            raise GraphError(f"marginal {self.name!r}: parents {list(self.parents)} "
                             f"must be exactly the switch/failure parents {sorted(expected)}")
        if (self.distribution is None) == (self.switch is None):
            raise GraphError(f"marginal {self.name!r}: give a distribution or a switch with distributions")
        if self.switch:
            sw = nodes.get(self.switch)
            if not isinstance(sw, CategoricalNode) or sw.cardinality != len(self.distributions):
                raise GraphError(f"marginal {self.name!r}: switch {self.switch!r} must be a categorical "
                                 f"node with {len(self.distributions)} labels")
        if self.failure and not isinstance(nodes.get(self.failure), FailureNode):
            raise GraphError(f"marginal {self.name!r}: {self.failure!r} is not a failure node")

    def sample(self, env, n, rng):
        u = rng.random(n)
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        if self.switch is None:
            x = np.asarray(self.distribution._ppf(u), dtype=float)
        else:
            codes = env[self.switch].astype(int)
            x = np.empty(n)
            for k, dist in enumerate(self.distributions):
                rows = codes == k
                if rows.any():
                    x[rows] = dist._ppf(u[rows])
        return {self.name: _apply_failure(x, env, self.failure, self.sentinel)}

    def logpdf(self, env):
        x = env[self.name]
        if self.switch is None:
            lp = self.distribution.logpdf(x)
        else:
            codes = env[self.switch].astype(int)
            lp = np.full(np.shape(x), -np.inf)
            for k, dist in enumerate(self.distributions):
                rows = codes == k
                lp = np.where(rows, dist.logpdf(x), lp)
        return _failure_logpdf(np.asarray(lp, dtype=float), x, env, self.failure, self.sentinel)


@dataclass(frozen=True)
class CategoricalNode(Node):
    labels: tuple = ()
    table: tuple = ()  # one probability row per parent configuration
    cards: tuple = ()  # parent cardinalities, filled in by build_graph

    kind = "categorical"
    discrete = True

    @property
    def cardinality(self):
        return len(self.labels)

    def validate(self, nodes):
        cards = [_discrete_parent(nodes, p, self.name).cardinality for p in self.parents]
        rows = math.prod(cards)
        if len(self.table) != rows:
            raise GraphError(f"categorical {self.name!r}: expected {rows} probability rows, got {len(self.table)}")
        for row in self.table:
            if len(row) != len(self.labels):
                raise GraphError(f"categorical {self.name!r}: row {row} does not match labels {self.labels}")
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-9:
                raise GraphError(f"categorical {self.name!r}: probabilities {row} must be >= 0 and sum to 1")

    def _row_index(self, env, nodes_card):
        idx = 0
        for p, card in zip(self.parents, nodes_card):
            idx = idx * card + env[p].astype(int)
        return idx

    def sample(self, env, n, rng):
        u = rng.random(n)
        cum = np.cumsum(np.asarray(self.table), axis=1)
        cum[:, -1] = 1.0
        rows = self._row_index(env, self.cards) if self.parents else np.zeros(n, dtype=int)
        codes = np.sum(u[:, None] >= cum[rows, :-1], axis=1)
        return {self.name: codes.astype(float)}

    def logpdf(self, env):
        x = np.asarray(env[self.name], dtype=float)
        rows = self._row_index(env, self.cards) if self.parents else np.zeros(np.shape(x), dtype=int)
        k = np.round(x)
        ok = (k == x) & (k >= 0) & (k < self.cardinality)
        p = np.asarray(self.table)[rows, np.where(ok, k, 0).astype(int)]
        with np.errstate(divide="ignore"):
            return np.where(ok, np.log(p), -np.inf)


@dataclass(frozen=True)
class FailureNode(Node):
    probabilities: tuple = ()  # one per parent configuration
    cards: tuple = ()

    kind = "failure"
    discrete = True
    cardinality = 2

    def validate(self, nodes):
        cards = [_discrete_parent(nodes, p, self.name).cardinality for p in self.parents]
        rows = math.prod(cards)
        if len(self.probabilities) != rows:
            raise GraphError(f"failure {self.name!r}: expected {rows} probabilities, got {len(self.probabilities)}")
        if any(not 0.0 <= p <= 1.0 for p in self.probabilities):
            raise GraphError(f"failure {self.name!r}: probabilities must lie in [0, 1]")

    def _p(self, env, n):
        if not self.parents:
            return np.full(n, self.probabilities[0])
        idx = 0
        for par, card in zip(self.parents, self.cards):
            idx = idx * card + env[par].astype(int)
        return np.asarray(self.probabilities)[idx]

    def sample(self, env, n, rng):
        return {self.name: (rng.random(n) < self._p(env, n)).astype(float)}

    def logpdf(self, env):
        x = np.asarray(env[self.name], dtype=float)
        p = self._p(env, x.size).reshape(x.shape)
        with np.errstate(divide="ignore"):
            return np.where(x == 1.0, np.log(p), np.where(x == 0.0, np.log1p(-p), -np.inf))


@dataclass(frozen=True)
class RegressionNode(Node):
    terms: tuple = ()
    coefficients: tuple = ()
    noise: Distribution | None = None  # None: noise-free
    transform: str | None = None
    failure: str | None = None
    sentinel: float = 0.0

    kind = "regression"

    def validate(self, nodes):
        factors = {f for t in self.terms for f in t.factors}
        inputs = set(self.parents) - ({self.failure} if self.failure else set())
        if factors != inputs:
            raise GraphError(f"regression {self.name!r}: terms use {sorted(factors)} "
                             f"but parents are {sorted(inputs)}")
        if len(self.terms) != len(self.coefficients):
            raise GraphError(f"regression {self.name!r}: {len(self.terms)} terms, "
                             f"{len(self.coefficients)} coefficients")
        if self.transform not in (None, "exp", "abs"):
            raise GraphError(f"regression {self.name!r}: unknown output transform {self.transform!r}")
        if self.failure and not isinstance(nodes.get(self.failure), FailureNode):
            raise GraphError(f"regression {self.name!r}: {self.failure!r} is not a failure node")

    def _mean(self, env, n):
        columns = {p: env[p] for p in self.parents} or {"_": np.zeros(n)}
        return regressor_matrix(columns, self.terms) @ np.asarray(self.coefficients, dtype=float)

    def _noise_logpdf(self, r):
        if self.noise is None:
            return np.where(r == 0.0, 0.0, -np.inf)
        return self.noise.logpdf(r)

    def sample(self, env, n, rng):
        eta = self._mean(env, n)
        if self.noise is not None:
            eta = eta + self.noise.sample(n, rng)
        if self.transform == "exp":
            eta = np.exp(eta)
        elif self.transform == "abs":
            eta = np.abs(eta)
        return {self.name: _apply_failure(eta, env, self.failure, self.sentinel)}

    def logpdf(self, env):
        y = np.asarray(env[self.name], dtype=float)
        mean = self._mean(env, y.size).reshape(y.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.transform == "exp":
                lp = np.where(y > 0, self._noise_logpdf(np.log(np.where(y > 0, y, 1.0)) - mean)
                              - np.log(np.where(y > 0, y, 1.0)), -np.inf)
            elif self.transform == "abs":
                a, b = self._noise_logpdf(y - mean), self._noise_logpdf(-y - mean)
                lp = np.where(y > 0, np.logaddexp(a, b), np.where(y == 0, a, -np.inf))
            else:
                lp = self._noise_logpdf(y - mean)
        return _failure_logpdf(np.asarray(lp, dtype=float), y, env, self.failure, self.sentinel)


@dataclass(frozen=True)
class CopulaGroupNode(Node):
    members: tuple = ()
    joints: tuple = ()
    switch: str | None = None

    kind = "copula_group"

    @property
    def outputs(self):
        return self.members

    def validate(self, nodes):
        expected = {self.switch} if self.switch else set()
        if set(self.parents) != expected:
            raise GraphError(f"copula group {self.name!r}: only the switch may be a parent")
        for j in self.joints:
            if j.dimension != len(self.members):
                raise GraphError(f"copula group {self.name!r}: joint dimension {j.dimension} "
                                 f"does not match {len(self.members)} members")
        if self.switch:
            sw = nodes.get(self.switch)
            if not isinstance(sw, CategoricalNode) or sw.cardinality != len(self.joints):
                raise GraphError(f"copula group {self.name!r}: switch {self.switch!r} must be a "
                                 f"categorical node with {len(self.joints)} labels")
        elif len(self.joints) != 1:
            raise GraphError(f"copula group {self.name!r}: exactly one joint model without a switch")

    def sample(self, env, n, rng):
        codes = env[self.switch].astype(int) if self.switch else np.zeros(n, dtype=int)
        x = sample_conditional(self.joints, codes, rng)
        return {m: x[:, j] for j, m in enumerate(self.members)}

    def logpdf(self, env):
        x = np.column_stack([np.atleast_1d(env[m]) for m in self.members])
        codes = env[self.switch].astype(int) if self.switch else np.zeros(x.shape[0], dtype=int)
        codes = np.atleast_1d(codes)
        lp = np.full(x.shape[0], -np.inf)
        for k, joint in enumerate(self.joints):
            rows = codes == k
            if rows.any():
                lp[rows] = joint.logpdf(x[rows])
        return lp


@dataclass(frozen=True)
class DeterministicNode(Node):
    fn: object = field(default=None, compare=False)
    params: dict = field(default_factory=dict, compare=False)
    label: str = ""
    expr: str | None = None

    kind = "deterministic"
    stochastic = False

    def compute(self, env):
        return self.fn(*[env[p] for p in self.parents], **self.params)


@dataclass(frozen=True)
class InjuryNode(DeterministicNode):
    kind = "injury"


# -- spec parsing ------------------------------------------------------------------

def _dist(d, where):
    try:
        return Distribution.from_dict(d)
    except ValidationError as exc:
        raise GraphError(f"{where}: {exc}") from None


def node_from_spec(spec):
    """Build a node object from a scenario-file dict."""
    if isinstance(spec, Node):
        return spec
    if not isinstance(spec, dict) or "name" not in spec or "kind" not in spec:
        raise GraphError(f"node spec needs 'name' and 'kind': {spec!r}")
    name = spec["name"]
    kind = spec["kind"].replace("-", "_")
    parents = list(spec.get("parents", []))

    if kind == "marginal":
        failure = spec.get("failure")
        switch = spec.get("switch")
        if switch:
            labels = spec.get("labels")
            dists = spec.get("distributions")
            if not isinstance(dists, dict):
                raise GraphError(f"marginal {name!r}: 'distributions' must map labels to distributions")
            ordered = [dists[k] for k in labels] if labels else list(dists.values())
            node = MarginalNode(name, (), None, switch,
                                tuple(_dist(d, f"marginal {name!r}") for d in ordered),
                                failure, float(spec.get("sentinel", 0.0)))
        else:
            node = MarginalNode(name, (), _dist(spec.get("distribution"), f"marginal {name!r}"),
                                None, (), failure, float(spec.get("sentinel", 0.0)))
        implied = [p for p in (switch, failure) if p]
        return dataclasses.replace(node, parents=tuple(parents or implied))

    if kind == "categorical":
        labels = tuple(str(s) for s in spec.get("labels", ()))
        if "probabilities" in spec:
            table = (tuple(float(p) for p in spec["probabilities"]),)
        elif "cpt" in spec:
            table = tuple(tuple(float(p) for p in row) for row in spec["cpt"])
        else:
            raise GraphError(f"categorical {name!r}: give 'probabilities' or 'cpt'")
        if not labels:
            labels = tuple(str(i) for i in range(len(table[0])))
        return CategoricalNode(name, tuple(parents), labels, table)

    if kind == "failure":
        if "probability" in spec:
            probs = (float(spec["probability"]),)
        elif "probabilities" in spec:
            probs = tuple(float(p) for p in spec["probabilities"])
        elif "evidence" in spec:
            ev = spec["evidence"]
            ev = ev if isinstance(ev, list) else [ev]
            try:
                probs = tuple(estimate_failure_probability(
                    FailureEvidence(int(e["failures"]), trials=int(e["trials"]))).point for e in ev)
            except (KeyError, TypeError) as exc:
                raise GraphError(f"failure {name!r}: evidence needs failures and trials ({exc})") from None
        else:
            raise GraphError(f"failure {name!r}: give 'probability', 'probabilities' or 'evidence'")
        return FailureNode(name, tuple(parents), probs)

    if kind == "regression":
        try:
            terms = tuple(parse_terms(spec["terms"]))
            coefs = tuple(float(c) for c in spec["coefficients"])
        except KeyError as exc:
            raise GraphError(f"regression {name!r}: missing {exc}") from None
        if "noise" in spec:
            noise = _dist(spec["noise"], f"regression {name!r}")
        elif float(spec.get("sigma", 0.0)) > 0:
            noise = Distribution("normal", (0.0, float(spec["sigma"])))
        else:
            noise = None
        failure = spec.get("failure")
        if not parents:
            seen = []
            for t in terms:
                for f in t.factors:
                    if f not in seen:
                        seen.append(f)
            parents = seen + ([failure] if failure else [])
        return RegressionNode(name, tuple(parents), terms, coefs, noise, spec.get("transform"),
                              failure, float(spec.get("sentinel", 0.0)))

    if kind == "copula_group":
        members = tuple(spec.get("members", ()))
        switch = spec.get("switch")
        if switch:
            joints = spec.get("joints")
            labels = spec.get("labels")
            if not isinstance(joints, dict):
                raise GraphError(f"copula group {name!r}: 'joints' must map labels to joint models")
            ordered = [joints[k] for k in labels] if labels else list(joints.values())
            joint_objs = tuple(_joint(j, name) for j in ordered)
        else:
            joint_objs = (_joint(spec.get("joint"), name),)
        return CopulaGroupNode(name, tuple(parents or ([switch] if switch else [])), members,
                               joint_objs, switch)

    if kind in ("deterministic", "injury"):
        params = dict(spec.get("params", {}))
        registry = INJURY_MODELS if kind == "injury" else FUNCTIONS
        cls = InjuryNode if kind == "injury" else DeterministicNode
        if "expr" in spec and kind == "deterministic":
            return cls(name, tuple(parents), None, params, spec["expr"], spec["expr"])
        ref = spec.get("model" if kind == "injury" else "function")
        if ref not in registry:
            raise GraphError(f"{kind} {name!r}: unknown {'model' if kind == 'injury' else 'function'} "
                             f"{ref!r} (registered: {sorted(registry)})")
        return cls(name, tuple(parents), registry[ref], params, ref)

    raise GraphError(f"node {name!r}: unknown kind {spec['kind']!r}")


def _joint(d, name):
    if isinstance(d, JointModel):
        return d
    if not isinstance(d, dict):
        raise GraphError(f"copula group {name!r}: joint model spec missing")
    try:
        return joint_from_dict(d)
    except ValidationError as exc:
        raise GraphError(f"copula group {name!r}: {exc}") from None


def expression_node(name, expr, parents=None):
    """Deterministic node evaluating a restricted arithmetic expression."""
    return DeterministicNode(name, tuple(parents or ()), None, {}, expr, expr)


# -- graph -------------------------------------------------------------------------

@dataclass(frozen=True)
class BnGraph:
    nodes: dict
    order: tuple
    risk_output: str | None = None

    @property
    def columns(self):
        return tuple(c for name in self.order for c in self.nodes[name].outputs)

    def owner(self, column):
        for node in self.nodes.values():
            if column in node.outputs:
                return node
        raise KeyError(column)

    def labels(self, column):
        node = self.owner(column)
        if isinstance(node, CategoricalNode):
            return node.labels
        if isinstance(node, MarginalNode) and node.distribution is not None and node.distribution.labels:
            return node.distribution.labels
        return None

    @property
    def stochastic_columns(self):
        return tuple(c for name in self.order if self.nodes[name].stochastic
                     for c in self.nodes[name].outputs)


def build_graph(specs, risk_output=None):
    """Parse, validate and topologically order a node list.

    Raises :class:`GraphError` on unknown parents, duplicate names, bad
    probability tables, regression arity mismatches and cycles (the error
    names one offending cycle).
    """
    nodes = {}
    column_owner = {}
    for spec in specs:
        node = node_from_spec(spec)
        if node.name in nodes or node.name in column_owner:
            raise GraphError(f"duplicate node name {node.name!r}")
        nodes[node.name] = node
        for col in node.outputs:
            if col in column_owner and column_owner[col] != node.name:
                raise GraphError(f"duplicate variable name {col!r}")
            column_owner[col] = node.name
    if not nodes:
        raise GraphError("a network needs at least one node")

    variables = set(column_owner)
    for name, node in list(nodes.items()):
        if isinstance(node, DeterministicNode) and node.expr is not None:
            try:
                fn, used = compile_expression(node.expr, node.parents or variables)
            except ValidationError as exc:
                raise GraphError(f"deterministic {name!r}: {exc}") from None
            parents = node.parents or tuple(used)
            nodes[name] = dataclasses.replace(node, parents=parents, fn=_expr_adapter(fn, parents))

    for node in nodes.values():
        if len(set(node.parents)) != len(node.parents):
            raise GraphError(f"node {node.name!r}: duplicate parents")
        for p in node.parents:
            if p not in variables:
                raise GraphError(f"node {node.name!r}: unknown parent {p!r}")

    # a parent reference to a copula member is an edge from its group
    deps = {n: [column_owner[p] for p in node.parents] for n, node in nodes.items()}
    order = _topological_order(list(nodes), deps)

    by_column = {col: nodes[owner] for col, owner in column_owner.items()}
    for name, node in list(nodes.items()):
        if isinstance(node, (CategoricalNode, FailureNode)):
            cards = tuple(_discrete_parent(by_column, p, name).cardinality for p in node.parents)
            nodes[name] = node = dataclasses.replace(node, cards=cards)
        node.validate(by_column)

    injuries = [n for n, node in nodes.items() if isinstance(node, InjuryNode)]
    if risk_output is None:
        if len(injuries) > 1:
            raise GraphError(f"several injury nodes {injuries}; designate the risk output explicitly")
        risk_output = injuries[0] if injuries else None
    elif risk_output not in variables:
        raise GraphError(f"risk output {risk_output!r} is not a node")
    return BnGraph(nodes, tuple(order), risk_output)


def _expr_adapter(fn, names):
    def call(*values):
        return fn(dict(zip(names, values)))
    return call


def _topological_order(names, deps):
    """Kahn's algorithm; among ready nodes the earliest declared goes first."""
    index = {n: i for i, n in enumerate(names)}
    indeg = {n: len(set(deps[n])) for n in names}
    children = {n: [] for n in names}
    for n in names:
        for p in set(deps[n]):
            children[p].append(n)
    ready = [index[n] for n in names if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = names[heapq.heappop(ready)]
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, index[c])
    if len(order) < len(names):
        raise CycleError(_find_cycle([n for n in names if indeg[n] > 0], deps))
    return order


def _find_cycle(candidates, deps):
    cand = set(candidates)
    # every remaining node has a remaining parent, so walking parents must loop
    path, seen = [], {}
    node = candidates[0]
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = next(p for p in deps[node] if p in cand)
    cycle = path[seen[node]:] + [node]
    return list(reversed(cycle))


def topological_order(graph):
    return list(graph.order)


# -- sampling ----------------------------------------------------------------------

@dataclass(frozen=True)
class SampleTable:
    columns: dict
    seed: int
    n: int
    labels: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def names(self):
        return list(self.columns)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        cols = [self.columns[c] for c in self.names]
        for i in range(self.n):
            w.writerow([repr(float(c[i])) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_bytes(self):
        return b"".join(np.ascontiguousarray(self.columns[c]).tobytes() for c in self.names)


def _evaluate(node, env, offset, n):
    with np.errstate(all="ignore"):
        try:
            out = node.compute(env)
        except EvaluationError:
            raise
        except Exception as exc:  # noqa: BLE001 - surfaced with node context
            raise EvaluationError(node.name, None, f"{type(exc).__name__}: {exc}") from exc
    out = np.broadcast_to(np.asarray(out, dtype=float), (n,)).copy()
    bad = np.isnan(out)
    if bad.any():
        row = int(np.argmax(bad))
        raise EvaluationError(node.name, offset + row, "result is not a number")
    if isinstance(node, InjuryNode) and np.any((out < 0) | (out > 1)):
        row = int(np.argmax((out < 0) | (out > 1)))
        raise EvaluationError(node.name, offset + row, f"injury probability {out[row]} outside [0, 1]")
    return out


def _sample_block(graph, seed, block, start, m):
    env = {}
    for name in graph.order:
        node = graph.nodes[name]
        if node.stochastic:
            env.update(node.sample(env, m, stream(seed, "bn", name, block)))
        else:
            env[name] = _evaluate(node, env, start, m)
    return env


def ancestral_sample(graph, n, seed, workers=1, block_size=BLOCK_SIZE):
    """Draw ``n`` joint samples by visiting nodes in topological order.

    Rows are produced in fixed-size blocks with per-(node, block) streams, so
    ``workers`` only changes wall time, never the result.
    """
    n = int(n)
    if n < 0:
        raise ValidationError("sample count must be non-negative")
    starts = list(range(0, n, block_size))
    tasks = [(b, s, min(block_size, n - s)) for b, s in enumerate(starts)]
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda t: _sample_block(graph, seed, *t), tasks))
    else:
        blocks = [_sample_block(graph, seed, *t) for t in tasks]
    columns = {}
    for col in graph.columns:
        parts = [b[col] for b in blocks]
        columns[col] = np.concatenate(parts) if parts else np.empty(0)
    labels = {c: graph.labels(c) for c in graph.columns if graph.labels(c)}
    return SampleTable(columns, seed, n, labels)


# -- density -----------------------------------------------------------------------

def log_density(graph, assignment):
    """Sum of log conditional densities/masses of the stochastic nodes.

    Deterministic nodes are recomputed from their parents; any value given
    for them is ignored. Values outside a node's support give ``-inf``.
    Accepts scalars or equal-length arrays.
    """
    scalar = all(np.ndim(v) == 0 for v in assignment.values())
    env = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in assignment.items()}
    m = len(next(iter(env.values()))) if env else 1
    total = np.zeros(m)
    for name in graph.order:
        node = graph.nodes[name]
        if not node.stochastic:
            env[name] = _evaluate(node, env, 0, m)
            continue
        missing = [c for c in node.outputs if c not in env]
        if missing:
            raise ValidationError(f"assignment is missing stochastic variable(s) {missing}")
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.asarray(node.logpdf(env), dtype=float).reshape(m)
        total = total + np.where(np.isnan(lp), -np.inf, lp)
    return float(total[0]) if scalar else total
