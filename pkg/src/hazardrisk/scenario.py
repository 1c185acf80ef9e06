"""Scenario specs, dataset ingestion, risk reports and screening studies.

A scenario spec is a JSON object::

    {
      "schema_version": 1,
      "id": "HS1",
      "mode": "discrete",            # or "continuous"
      "scenario_rate": 0.02,         # /h, discrete mode
      "p_scenario": ..., "behavior_rate": ...,   # continuous mode instead
      "risk_output": "injury_I2",    # node whose mean is the risk
      "outputs": {"I2+": "injury_I2"},            # optional, per injury level
      "samples": 100000,
      "seed": 1,
      "rac": {"human_rates": {"I2+": 1.5e-7}, "k_s": 10},   # optional
      "nodes": [ ... network node specs ... ]
    }

Reports serialise every number as ``{"decimal": "1.23457e-04", "exact": "0x1.02...p-13"}``
and carry a digest of the spec, so a report can be recomputed and compared
bit for bit.
"""

from dataclasses import dataclass, field
import csv
import hashlib
import json
import math
import os
import tempfile

import numpy as np

from . import __version__
from .bayesnet import ancestral_sample, build_graph
from .doe import (DesignMatrix, FactorSpec, Term, check_responses, decode_design, diagnostics,
                  estimable_terms, fit_linear_model, full_factorial_design, interaction_terms,
                  ofat_design, pareto_table, parse_terms, select_significant_terms)
from .errors import ValidationError
from .risk import (InjuryLevel, RacSpec, aggregate_budgets, human_rates_from_counts, mcs_estimate,
                   prb_check)
from .rng import stream

SCHEMA_VERSION = 1


# -- serialisation helpers -------------------------------------------------------

def number(x):
    """A float as a 6-significant-digit decimal string plus its exact hex form."""
    x = float(x)
    return {"decimal": f"{x:.5e}", "exact": x.hex()}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def digest(obj):
    data = obj if isinstance(obj, bytes) else canonical_json(obj).encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def write_atomic(path, data):
    """Write text or bytes to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- datasets ---------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    columns: dict
    n_rows: int
    path: str = ""

    @property
    def names(self):
        return list(self.columns)

    def __getitem__(self, name):
        return self.columns[name]

    def matrix(self, names=None):
        names = names or self.names
        return np.column_stack([self.columns[c] for c in names]) if names else np.empty((self.n_rows, 0))


def load_dataset(path, expected_columns=None, allow_extra=False):
    """Read a numeric CSV with a header row.

    ``expected_columns`` must all be present; without ``allow_extra`` no other
    columns may appear. Errors name the offending column and the 1-based
    data row.
    """
    if not os.path.isfile(path):
        raise ValidationError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(h.strip() for h in rows[0]):
        raise ValidationError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names in header {header}")
    if expected_columns is not None:
        missing = [c for c in expected_columns if c not in header]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {missing}")
        extra = [c for c in header if c not in expected_columns]
        if extra and not allow_extra:
            raise ValidationError(f"{path}: unexpected column(s) {extra}")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                data[i - 1, j] = float(cell)
            except ValueError:
                raise ValidationError(f"{path}: row {i}, column {header[j]!r}: "
                                      f"non-numeric value {cell!r}") from None
    keep = expected_columns if expected_columns is not None else header
    cols = {c: data[:, header.index(c)].copy() for c in keep}
    return Dataset(cols, len(body), str(path))


# -- scenarios ---------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    mode: str
    nodes: list
    risk_output: str
    samples: int
    seed: int
    scenario_rate: float | None = None
    p_scenario: float | None = None
    behavior_rate: float | None = None
    outputs: dict = field(default_factory=dict)
    rac: RacSpec | None = None
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def exposure_factor(self):
        """Multiplier turning the per-scenario injury probability into a rate."""
        if self.mode == "discrete":
            return self.scenario_rate
        return self.p_scenario * self.behavior_rate

    def graph(self):
        return build_graph(self.nodes, self.risk_output)


def _rac_from(d):
    if d is None:
        return None
    if "k_s" not in d:
        raise ValidationError("rac needs an explicit safety factor k_s")
    if "human_rates" in d:
        rates = d["human_rates"]
    elif "human_counts" in d:
        c = d["human_counts"]
        try:
            rates = human_rates_from_counts(c["slight"], c["severe"], c["fatal"], c["hours"])
        except KeyError as exc:
            raise ValidationError(f"rac human_counts missing {exc}") from None
    else:
        raise ValidationError("rac needs human_rates or human_counts")
    return RacSpec(rates, float(d["k_s"]))


def parse_scenario(d, seed=None, samples=None):
    """Validate a scenario dict; ``seed``/``samples`` override the file values."""
    if not isinstance(d, dict):
        raise ValidationError("scenario spec must be a JSON object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    mode = d.get("mode", "discrete")
    if mode not in ("discrete", "continuous"):
        raise ValidationError(f"mode must be 'discrete' or 'continuous', got {mode!r}")

    def nonneg(key, upper=None):
        v = d.get(key)
        if v is None:
            raise ValidationError(f"{mode} mode needs {key!r}")
        v = float(v)
        if not (v >= 0 and math.isfinite(v)) or (upper is not None and v > upper):
            raise ValidationError(f"{key} out of range: {v}")
        return v

    rate = p_s = lam_b = None
    if mode == "discrete":
        rate = nonneg("scenario_rate")
    else:
        p_s, lam_b = nonneg("p_scenario", 1.0), nonneg("behavior_rate")

    n = int(samples if samples is not None else d.get("samples", 0))
    if n < 2:
        raise ValidationError(f"sample count must be at least 2, got {n}")
    s = seed if seed is not None else d.get("seed")
    if s is None:
        raise ValidationError("scenario needs a seed (in the file or via --seed)")
    if "nodes" not in d or "risk_output" not in d:
        raise ValidationError("scenario needs 'nodes' and 'risk_output'")
    outputs = {InjuryLevel.parse(k).value: v for k, v in d.get("outputs", {}).items()}
    spec = ScenarioSpec(str(d.get("id", "scenario")), mode, list(d["nodes"]), d["risk_output"], n, int(s),
                        rate, p_s, lam_b, outputs, _rac_from(d.get("rac")), d)
    graph = spec.graph()
    for node in [spec.risk_output, *outputs.values()]:
        if node not in graph.columns:
            raise ValidationError(f"output node {node!r} is not in the network")
    return spec


def load_scenario(path, seed=None, samples=None):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(d, seed, samples)


@dataclass(frozen=True)
class ScenarioResult:
    spec: ScenarioSpec
    estimates: dict  # output label -> RiskEstimate (with rate)
    table: object

    @property
    def primary(self):
        return self.estimates[self.spec.risk_output]


def simulate(spec, workers=1):
    """Sample the network and estimate the mean of every output node."""
    if not isinstance(spec, ScenarioSpec):
        spec = parse_scenario(spec)
    graph = spec.graph()
    table = ancestral_sample(graph, spec.samples, spec.seed, workers=workers)
    names = dict.fromkeys([spec.risk_output, *spec.outputs.values()])
    estimates = {}
    for node in names:
        try:
            est = mcs_estimate(table[node])
        except ValidationError as exc:
            raise ValidationError(f"output {node!r}: {exc}") from None
        estimates[node] = est.with_rate(spec.exposure_factor)
    return ScenarioResult(spec, estimates, table)


def _estimate_json(est):
    d = {k: number(v) for k, v in est.to_dict().items() if k != "n"}
    d["n"] = est.n
    d["formatted"] = est.format()
    d["rate_formatted"] = est.format_rate()
    return d


def run_scenario(spec, workers=1):
    """Simulate a scenario and build its risk report as a JSON-ready dict."""
    result = simulate(spec, workers)
    return build_report([result])


def build_report(results):
    """Consolidated report over one or more simulated scenarios."""
    scenarios = []
    rates_by_level = {}
    racs = []
    for res in results:
        spec = res.spec
        level_of = {node: lvl for lvl, node in spec.outputs.items()}
        entry = {
            "id": spec.id,
            "mode": spec.mode,
            "seed": spec.seed,
            "samples": spec.samples,
            "spec_sha256": digest(spec.raw),
            "risk_output": spec.risk_output,
            "exposure_factor": number(spec.exposure_factor),
            "estimates": {},
        }
        for node, est in res.estimates.items():
            e = _estimate_json(est)
            if node in level_of:
                e["level"] = level_of[node]
                rates_by_level.setdefault(level_of[node], {})[spec.id] = est.rate
            entry["estimates"][node] = e
        scenarios.append(entry)
        if spec.rac is not None:
            racs.append(spec.rac)

    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "hazardrisk", "version": __version__},
        "scenarios": scenarios,
    }
    if racs:
        rac = racs[0]
        if any(r != rac for r in racs[1:]):
            raise ValidationError("scenarios in one report must share the same acceptance criterion")
        aggregate, verdicts = {}, {}
        for level, rates in sorted(rates_by_level.items()):
            lvl = InjuryLevel.parse(level)
            if lvl not in rac.human_rates:
                continue
            b = aggregate_budgets(rates, rac, lvl)
            aggregate[level] = {
                "total": number(b.total),
                "budget": number(b.budget),
                "human_rate": number(rac.human_rates[lvl]),
                "pass": b.passed,
                "shares": {k: number(v) for k, v in b.shares.items()},
            }
            verdicts[level] = prb_check({lvl: b.total}, rac)[lvl]
        report["rac"] = {"k_s": number(rac.k_s)}
        report["aggregate"] = aggregate
        report["prb"] = verdicts
    report["inputs_sha256"] = digest([s["spec_sha256"] for s in scenarios])
    return report


def report_bytes(report):
    return (json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


# -- screening ---------------------------------------------------------------------

@dataclass(frozen=True)
class ScreeningConfig:
    design: str
    factors: tuple
    replicates: int = 1
    randomize: bool = False
    seed: int | None = None
    terms: tuple | None = None
    max_order: int | None = None
    alpha: float = 0.05
    response_transform: str | None = None

    @property
    def names(self):
        return tuple(f.name for f in self.factors)


def parse_screening_config(d, alpha=None, seed=None):
    if not isinstance(d, dict):
        raise ValidationError("screening config must be a JSON object")
    design = d.get("design", "factorial")
    if design not in ("factorial", "ofat"):
        raise ValidationError(f"design must be 'factorial' or 'ofat', got {design!r}")
    raw = d.get("factors")
    if isinstance(raw, int):
        factors = tuple(FactorSpec(f"x{i + 1}", -1.0, 1.0) for i in range(raw))
    elif isinstance(raw, list) and raw:
        try:
            factors = tuple(FactorSpec(f["name"], float(f.get("low", -1.0)), float(f.get("high", 1.0)),
                                       f.get("unit", "")) for f in raw)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed factor list: {exc}") from None
    else:
        raise ValidationError("config needs 'factors' (a count or a list of {name, low, high})")
    reps = int(d.get("replicates", 1))
    if reps < 1:
        raise ValidationError("replicates must be at least 1")
    a = float(alpha if alpha is not None else d.get("alpha", 0.05))
    if not 0 < a < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {a}")
    terms = tuple(d["terms"]) if d.get("terms") else None
    return ScreeningConfig(design, factors, reps, bool(d.get("randomize", False)),
                           seed if seed is not None else d.get("seed"), terms,
                           d.get("max_order"), a, d.get("response_transform"))


def screening_design(config):
    names = config.names
    if config.design == "ofat":
        return ofat_design(len(names), config.replicates, names)
    rng = stream(config.seed, "design") if config.randomize else None
    if config.randomize and config.seed is None:
        raise ValidationError("a randomised run order needs a seed")
    return full_factorial_design(len(names), config.replicates, config.randomize, rng, names)


def candidate_terms(config):
    if config.terms:
        terms = parse_terms(config.terms, config.names)
        if not any(t.is_intercept for t in terms):
            terms = [Term(), *terms]
        return terms
    return interaction_terms(config.names, config.max_order)


@dataclass(frozen=True)
class ScreeningResult:
    design: DesignMatrix
    model: object
    selected: list
    degenerate: bool
    not_estimable: list
    pareto: list
    diagnostics: object
    alpha: float

    def to_dict(self):
        d = self.diagnostics
        return {
            "selected": list(self.selected),
            "degenerate_fit": self.degenerate,
            "not_estimable": list(self.not_estimable),
            "alpha": self.alpha,
            "runs": self.design.n_runs,
            "r_squared": number(self.model.r_squared),
            "sigma": number(self.model.sigma),
            "dof": self.model.dof,
            "pareto": [{"term": t, "beta": number(b), "ci_low": number(lo), "ci_high": number(hi)}
                       for t, b, lo, hi in self.pareto],
            "diagnostics": {
                "qq_correlation": number(d.qq_correlation),
                "lack_of_fit_p": None if d.lack_of_fit_p is None else number(d.lack_of_fit_p),
                "lack_of_fit": d.lack_of_fit,
            },
        }


def run_screening(config, responses, design=None):
    """Fit the candidate model to design responses and select significant terms.

    ``responses`` are row-aligned with the design in standard order. Terms
    the design cannot separate (e.g. interactions in an OFAT design) are
    dropped from the fit and reported as not estimable.
    """
    if isinstance(config, dict):
        config = parse_screening_config(config)
    design = design or screening_design(config)
    y = np.asarray(responses, dtype=float).ravel()
    if y.size != design.n_runs:
        raise ValidationError(f"design has {design.n_runs} runs but {y.size} responses were given")
    check_responses(y)
    columns = {n: design.coded[:, j] for j, n in enumerate(design.factor_names)}
    terms = candidate_terms(config)
    kept, dropped = estimable_terms(columns, terms)
    model = fit_linear_model(columns, y, kept, config.alpha, config.response_transform)
    sel = select_significant_terms(model, config.alpha)
    diag = diagnostics(model, design.run_order, config.alpha, design=design.coded)
    return ScreeningResult(design, model, sel.names, sel.degenerate, [t.name for t in dropped],
                           pareto_table(model, config.alpha), diag, config.alpha)


def design_csv(design, factors=None):
    """Design rows (standard order) with run order and, if given, physical levels."""
    header = ["run", *design.factor_names]
    phys = None
    if factors is not None:
        phys = decode_design(design, factors)
        header += [f"{n}_physical" for n in design.factor_names]
    position = np.empty(design.n_runs, dtype=int)
    position[design.run_order] = np.arange(design.n_runs)
    lines = [",".join(header)]
    for i, row in enumerate(design.coded):
        cells = [str(int(position[i]) + 1), *(repr(float(v)) for v in row)]
        if phys is not None:
            cells += [repr(float(v)) for v in phys[i]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
