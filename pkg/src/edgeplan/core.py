"""Problem data model: instances, uncertainty sets, plans, scenarios.

An instance couples the deterministic system data (prices, capacities,
delays, penalties, budget) with a demand box `[lam_bar, lam_bar+lam_tilde]`
whose deviations are rationed by the integer budget gamma, and a failure
set allowing at most `failure_budget` nodes to go down at once.  All types
freeze their arrays after validation and are safe to share across workers.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

ABS_TOL = 1e-9
VERTEX_CAP = 1_000_000


class InstanceError(ValueError):
    """Instance data is malformed or internally inconsistent."""


class ScenarioError(ValueError):
    """A scenario or uncertainty element violates its set membership."""


class EnumerationCapError(RuntimeError):
    """Vertex enumeration would exceed the configured cap."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_nonneg(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name} must be finite")
    if np.any(arr < 0):
        raise InstanceError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class UncertaintyModel:
    """Budgets of the joint uncertainty set.

    `gamma` caps how many areas may sit at their maximum deviation
    simultaneously (integer, which makes binary deviation vectors
    sufficient for worst-case search); `failure_budget` caps concurrent
    node failures.  `deviation_ratio` records alpha when the deviations
    were constructed as a fixed fraction of nominal demand.
    """

    gamma: int
    failure_budget: int
    deviation_ratio: float | None = None

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 0:
            raise InstanceError(f"gamma must be a nonnegative integer, got {self.gamma}")
        if int(self.failure_budget) != self.failure_budget or self.failure_budget < 0:
            raise InstanceError(f"failure_budget must be a nonnegative integer, got {self.failure_budget}")
        object.__setattr__(self, "gamma", int(self.gamma))
        object.__setattr__(self, "failure_budget", int(self.failure_budget))
        if self.deviation_ratio is not None and not (0 <= self.deviation_ratio < np.inf):
            raise InstanceError("deviation_ratio must be a nonnegative real")


@dataclass(frozen=True)
class ProblemInstance:
    price: np.ndarray           # p[j], currency per resource unit
    capacity: np.ndarray        # C[j], resource units available at node j
    placement_cost: np.ndarray  # f[j], one-off install cost
    storage_cost: np.ndarray    # s[j], recurring storage charge
    initial_placement: np.ndarray  # l0[j] bit: service already present
    delay: np.ndarray           # d[i][j], milliseconds
    beta: float                 # delay penalty per workload-ms
    unmet_penalty: np.ndarray   # P[i], currency per dropped unit
    budget: float               # B
    nominal_demand: np.ndarray  # lam_bar[i]
    demand_deviation: np.ndarray  # lam_tilde[i]
    uncertainty: UncertaintyModel
    dmax: float = math.inf      # eligibility threshold on delay
    eligibility: np.ndarray | None = None  # a[i][j] bit; derived from dmax when absent

    def __post_init__(self):
        object.__setattr__(self, "price", _frozen(self.price))
        object.__setattr__(self, "capacity", _frozen(self.capacity))
        object.__setattr__(self, "placement_cost", _frozen(self.placement_cost))
        object.__setattr__(self, "storage_cost", _frozen(self.storage_cost))
        object.__setattr__(self, "initial_placement", _frozen(self.initial_placement, dtype=np.int8))
        object.__setattr__(self, "delay", _frozen(np.atleast_2d(self.delay)))
        object.__setattr__(self, "unmet_penalty", _frozen(self.unmet_penalty))
        object.__setattr__(self, "nominal_demand", _frozen(self.nominal_demand))
        object.__setattr__(self, "demand_deviation", _frozen(self.demand_deviation))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "budget", float(self.budget))
        object.__setattr__(self, "dmax", float(self.dmax))

        i, j = self.delay.shape
        if i < 1 or j < 1:
            raise InstanceError("need at least one area and one node")
        for name, arr, length in (
            ("price", self.price, j), ("capacity", self.capacity, j),
            ("placement_cost", self.placement_cost, j), ("storage_cost", self.storage_cost, j),
            ("initial_placement", self.initial_placement, j),
            ("unmet_penalty", self.unmet_penalty, i),
            ("nominal_demand", self.nominal_demand, i),
            ("demand_deviation", self.demand_deviation, i),
        ):
            if arr.ndim != 1 or arr.shape[0] != length:
                raise InstanceError(f"{name} must be a vector of length {length}")
        for name, arr in (
            ("price", self.price), ("capacity", self.capacity),
            ("placement_cost", self.placement_cost), ("storage_cost", self.storage_cost),
            ("delay", self.delay), ("unmet_penalty", self.unmet_penalty),
            ("nominal_demand", self.nominal_demand), ("demand_deviation", self.demand_deviation),
        ):
            _check_nonneg(name, arr)
        if not np.all(np.isin(self.initial_placement, (0, 1))):
            raise InstanceError("initial_placement entries must be bits")
        if self.beta < 0 or not math.isfinite(self.beta):
            raise InstanceError("beta must be a nonnegative real")
        if not math.isfinite(self.budget) or self.budget < 0:
            raise InstanceError("budget must be a nonnegative real")
        if math.isnan(self.dmax):
            raise InstanceError("dmax must be a number or infinity")
        if not isinstance(self.uncertainty, UncertaintyModel):
            raise InstanceError("uncertainty must be an UncertaintyModel")
        if self.uncertainty.gamma > i:
            raise InstanceError("gamma cannot exceed the number of areas")
        if self.uncertainty.failure_budget > j:
            raise InstanceError("failure_budget cannot exceed the number of nodes")

        if self.eligibility is None:
            elig = (self.delay <= self.dmax).astype(np.int8)
        else:
            elig = np.atleast_2d(np.asarray(self.eligibility))
            if elig.shape != (i, j):
                raise InstanceError(f"eligibility must have shape ({i}, {j})")
            if not np.all(np.isin(elig, (0, 1))):
                raise InstanceError("eligibility entries must be bits")
            elig = elig.astype(np.int8)
        object.__setattr__(self, "eligibility", _frozen(elig, dtype=np.int8))

    @property
    def num_areas(self) -> int:
        return self.delay.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.delay.shape[1]

    @property
    def node_cost(self) -> np.ndarray:
        """Combined placement charge h[j] = f[j]*(1-l0[j]) + s[j]."""
        return self.placement_cost * (1 - self.initial_placement) + self.storage_cost

    def demand_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.nominal_demand, self.nominal_demand + self.demand_deviation

    def replace(self, **changes) -> "ProblemInstance":
        """A copy with the given fields swapped (arrays revalidated)."""
        fields = {
            "price": self.price, "capacity": self.capacity,
            "placement_cost": self.placement_cost, "storage_cost": self.storage_cost,
            "initial_placement": self.initial_placement, "delay": self.delay,
            "beta": self.beta, "unmet_penalty": self.unmet_penalty,
            "budget": self.budget, "nominal_demand": self.nominal_demand,
            "demand_deviation": self.demand_deviation, "uncertainty": self.uncertainty,
            "dmax": self.dmax, "eligibility": self.eligibility,
        }
        fields.update(changes)
        return ProblemInstance(**fields)


@dataclass(frozen=True)
class FirstStagePlan:
    """First-stage decision: where the service runs (t) and units bought (y)."""

    placement: np.ndarray   # t[j] bit
    procurement: np.ndarray  # y[j] units

    def __post_init__(self):
        object.__setattr__(self, "placement", _frozen(self.placement, dtype=np.int8))
        object.__setattr__(self, "procurement", _frozen(self.procurement))
        if self.placement.ndim != 1 or self.procurement.shape != self.placement.shape:
            raise InstanceError("placement and procurement must be vectors of equal length")
        if not np.all(np.isin(self.placement, (0, 1))):
            raise InstanceError("placement entries must be bits")
        _check_nonneg("procurement", self.procurement)

    def validate(self, instance: ProblemInstance, *, integral: bool = True, tol: float = 1e-6) -> None:
        """Check the coupling y <= C t, the budget row, and optional integrality."""
        if self.placement.shape[0] != instance.num_nodes:
            raise InstanceError("plan length does not match the instance")
        if np.any(self.procurement > instance.capacity * self.placement + tol):
            raise InstanceError("procurement exceeds placed capacity")
        if integral and np.any(np.abs(self.procurement - np.round(self.procurement)) > tol):
            raise InstanceError("procurement must be integral")
        cost = provisioning_cost(instance, self)
        if cost > instance.budget + tol * max(1.0, instance.budget):
            raise InstanceError(f"plan cost {cost} exceeds budget {instance.budget}")

    @staticmethod
    def empty(num_nodes: int) -> "FirstStagePlan":
        return FirstStagePlan(np.zeros(num_nodes, dtype=np.int8), np.zeros(num_nodes))


@dataclass(frozen=True)
class Scenario:
    """One uncertainty realization: demand vector and failure bits."""

    demand: np.ndarray
    failures: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "demand", _frozen(self.demand))
        object.__setattr__(self, "failures", _frozen(self.failures, dtype=np.int8))
        if self.demand.ndim != 1 or self.failures.ndim != 1:
            raise ScenarioError("scenario fields must be vectors")
        _check_nonneg("demand", self.demand)
        if not np.all(np.isin(self.failures, (0, 1))):
            raise ScenarioError("failures entries must be bits")

    def key(self) -> tuple:
        """Hashable identity used for pool-membership tests."""
        return (tuple(np.round(self.demand, 9)), tuple(int(z) for z in self.failures))


@dataclass(frozen=True)
class RecourseOutcome:
    """Second-stage answer: allocation x, unmet demand q, and its cost."""

    allocation: np.ndarray
    unmet: np.ndarray
    second_stage_cost: float

    def __post_init__(self):
        object.__setattr__(self, "allocation", _frozen(np.atleast_2d(self.allocation)))
        object.__setattr__(self, "unmet", _frozen(self.unmet))
        object.__setattr__(self, "second_stage_cost", float(self.second_stage_cost))


def demand_from_g(instance: ProblemInstance, g) -> np.ndarray:
    """Demand vector lam_bar + g*lam_tilde for a deviation vector g in the budgeted box."""
    g = np.asarray(g, dtype=float)
    if g.shape != (instance.num_areas,):
        raise ScenarioError(f"g must have length {instance.num_areas}")
    if np.any(g < -ABS_TOL) or np.any(g > 1 + ABS_TOL):
        raise ScenarioError("g outside the unit box")
    if g.sum() > instance.uncertainty.gamma + ABS_TOL:
        raise ScenarioError(
            f"sum(g)={g.sum()} exceeds gamma={instance.uncertainty.gamma}")
    return instance.nominal_demand + g * instance.demand_deviation


def count_vertices(uncertainty: UncertaintyModel, num_areas: int, num_nodes: int) -> int:
    """Closed-form vertex count: binomial sums over both budgets, multiplied."""
    demand = sum(math.comb(num_areas, k) for k in range(min(uncertainty.gamma, num_areas) + 1))
    failure = sum(math.comb(num_nodes, k) for k in range(min(uncertainty.failure_budget, num_nodes) + 1))
    return demand * failure


def enumerate_vertices(uncertainty: UncertaintyModel, num_areas: int, num_nodes: int,
                       *, cap: int = VERTEX_CAP) -> list[tuple[np.ndarray, np.ndarray]]:
    """All (g, z) vertices of the joint uncertainty set, as binary vectors.

    Binary g suffices because the demand budget is integral.  Refuses to
    materialize more than `cap` pairs.
    """
    total = count_vertices(uncertainty, num_areas, num_nodes)
    if total > cap:
        raise EnumerationCapError(
            f"enumeration infeasible: {total} vertices exceed the cap of {cap}")

    def binary_budget(n: int, budget: int) -> list[np.ndarray]:
        out = []
        for k in range(min(budget, n) + 1):
            for idx in combinations(range(n), k):
                v = np.zeros(n)
                v[list(idx)] = 1.0
                out.append(v)
        return out

    gs = binary_budget(num_areas, uncertainty.gamma)
    zs = binary_budget(num_nodes, uncertainty.failure_budget)
    return [(g, z) for g in gs for z in zs]


def sample_failures(num_nodes: int, budget: int, size: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from {z binary : sum(z) <= budget}, one row per draw.

    Uniform over the whole set, so a failure count k appears with
    probability proportional to C(num_nodes, k); the empty vector is a
    legitimate draw.
    """
    budget = min(budget, num_nodes)
    weights = np.array([math.comb(num_nodes, k) for k in range(budget + 1)], dtype=float)
    counts = rng.choice(budget + 1, size=size, p=weights / weights.sum())
    out = np.zeros((size, num_nodes), dtype=np.int8)
    for row, k in enumerate(counts):
        if k:
            out[row, rng.choice(num_nodes, size=k, replace=False)] = 1
    return out


def provisioning_cost(instance: ProblemInstance, plan: FirstStagePlan) -> float:
    """First-stage spend: unit prices times procurement plus node charges."""
    return float(instance.price @ plan.procurement + instance.node_cost @ plan.placement)


def second_stage_cost(instance: ProblemInstance, allocation: np.ndarray, unmet: np.ndarray,
                      *, psi: float = 1.0) -> float:
    """Penalty plus delay cost of a recourse answer; psi scales the penalties."""
    return float(psi * (instance.unmet_penalty @ unmet)
                 + instance.beta * np.sum(instance.delay * allocation))


# ---------------------------------------------------------------------------
# serialization

def instance_to_json(instance: ProblemInstance) -> dict:
    doc = {
        "areas": instance.num_areas,
        "nodes": instance.num_nodes,
        "prices": instance.price.tolist(),
        "capacities": instance.capacity.tolist(),
        "placement_costs": instance.placement_cost.tolist(),
        "storage_costs": instance.storage_cost.tolist(),
        "initial_placement": instance.initial_placement.tolist(),
        "delays": instance.delay.ravel().tolist(),
        "beta": instance.beta,
        "unmet_penalty": instance.unmet_penalty.tolist(),
        "budget": instance.budget,
        "nominal_demand": instance.nominal_demand.tolist(),
        "gamma": instance.uncertainty.gamma,
        "failure_budget": instance.uncertainty.failure_budget,
    }
    ratio = instance.uncertainty.deviation_ratio
    if ratio is not None and np.allclose(instance.demand_deviation,
                                         ratio * instance.nominal_demand, atol=0, rtol=0):
        doc["deviation"] = ratio
    else:
        doc["deviation"] = instance.demand_deviation.tolist()
    if math.isfinite(instance.dmax):
        doc["dmax"] = instance.dmax
    derived = (instance.delay <= instance.dmax).astype(np.int8)
    if not np.array_equal(derived, instance.eligibility):
        doc["eligibility"] = instance.eligibility.ravel().tolist()
    return doc


def instance_from_json(doc: dict) -> ProblemInstance:
    try:
        i = int(doc["areas"])
        j = int(doc["nodes"])
    except KeyError as exc:
        raise InstanceError(f"missing key {exc}") from exc
    if i < 1 or j < 1:
        raise InstanceError("areas and nodes must be positive")

    def vec(key: str, length: int, default=None) -> np.ndarray:
        if key not in doc:
            if default is None:
                raise InstanceError(f"missing key '{key}'")
            return np.full(length, float(default))
        raw = doc[key]
        if np.isscalar(raw):
            return np.full(length, float(raw))
        arr = np.asarray(raw, dtype=float)
        if arr.shape != (length,):
            raise InstanceError(f"'{key}' must have length {length}, got shape {arr.shape}")
        return arr

    def matrix(key: str) -> np.ndarray:
        raw = np.asarray(doc[key], dtype=float)
        if raw.shape == (i, j):
            return raw
        if raw.shape == (i * j,):
            return raw.reshape(i, j)
        raise InstanceError(f"'{key}' must be {i}x{j} (nested or row-major flat)")

    nominal = vec("nominal_demand", i)
    if "deviation" not in doc:
        raise InstanceError("missing key 'deviation'")
    ratio = None
    if np.isscalar(doc["deviation"]):
        ratio = float(doc["deviation"])
        deviation = ratio * nominal
    else:
        deviation = vec("deviation", i)

    eligibility = None
    if "eligibility" in doc and doc["eligibility"] is not None:
        eligibility = matrix("eligibility")
    dmax = doc.get("dmax")
    dmax = math.inf if dmax is None else float(dmax)

    for key in ("beta", "budget", "gamma", "failure_budget"):
        if key not in doc:
            raise InstanceError(f"missing key '{key}'")

    return ProblemInstance(
        price=vec("prices", j),
        capacity=vec("capacities", j),
        placement_cost=vec("placement_costs", j),
        storage_cost=vec("storage_costs", j, default=0.0),
        initial_placement=vec("initial_placement", j, default=0.0),
        delay=matrix("delays"),
        beta=float(doc["beta"]),
        unmet_penalty=vec("unmet_penalty", i),
        budget=float(doc["budget"]),
        nominal_demand=nominal,
        demand_deviation=deviation,
        uncertainty=UncertaintyModel(int(doc["gamma"]), int(doc["failure_budget"]),
                                     deviation_ratio=ratio),
        dmax=dmax,
        eligibility=eligibility,
    )


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file plus rename so readers never observe partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_instance(instance: ProblemInstance, path: str) -> None:
    atomic_write_text(path, canonical_json(instance_to_json(instance)))


def load_instance(path: str) -> ProblemInstance:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceError(f"instance document must be a JSON object: {path}")
    return instance_from_json(doc)


def plan_to_json(plan: FirstStagePlan, *, method: str, objective: float, **extras) -> dict:
    doc = {
        "t": [int(v) for v in plan.placement],
        "y": [float(v) for v in plan.procurement],
        "method": method,
        "objective": float(objective),
    }
    doc.update(extras)
    return doc


def plan_from_json(doc: dict) -> tuple[FirstStagePlan, dict]:
    try:
        plan = FirstStagePlan(np.asarray(doc["t"]), np.asarray(doc["y"], dtype=float))
    except KeyError as exc:
        raise InstanceError(f"plan document missing key {exc}") from exc
    meta = {k: v for k, v in doc.items() if k not in ("t", "y")}
    return plan, meta


def save_plan(plan: FirstStagePlan, path: str, *, method: str, objective: float, **extras) -> None:
    atomic_write_text(path, canonical_json(plan_to_json(plan, method=method,
                                                        objective=objective, **extras)))


def load_plan(path: str) -> tuple[FirstStagePlan, dict]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"not valid JSON: {path}: {exc}") from exc
    return plan_from_json(doc)
