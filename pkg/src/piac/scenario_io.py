"""Scenario documents (JSON), the bundled 39-bus case and time-series export.

A scenario is one JSON object::

    {
      "schema_version": 1,
      "network": "ieee39.json" | {...inline network...},
      "seed": 2024,                      # prices for controlled nodes without one
      "variant": "mlpiac",
      "gains": {"k1": 0.4, "k2": 1.6, "k3": 10},
      "partitions": {"mlpiac": {"kind": "areas", "areas": {"1": [..]}, "comm": [[1, 2, 1.0]]}},
      "disturbances": [{"at": 5, "node": 4, "delta_P": -0.66}],
      "t_end": 70, "dt": 0.001,
      "outputs": ["omega", "u_s"]
    }

A network object holds ``f_nominal``, ``base_mva``, ``nodes`` (id, kind,
inertia, damping, injection, optional price) and ``edges`` (i, j, susceptance).
Partition kinds: ``single``, ``per_node`` (optional ``comm`` node pairs, default
BFS spanning tree) and ``areas``.
"""
from __future__ import annotations

import csv
import fnmatch
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .controllers import ControllerGains, Variant
from .dynamics import Disturbance, Trajectory
from .netmodel import (
    Edge,
    Node,
    NodeKind,
    Partition,
    PowerNetwork,
    from_area_lists,
    per_node,
    single_area,
    validate_network,
)

SCHEMA_VERSION = 1
DEFAULT_SEED = 119
DATA = resources.files("piac") / "data"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    gains: ControllerGains
    disturbances: tuple[Disturbance, ...] = ()
    t_end: float = 70.0
    dt: float = 1e-3
    seed: int = DEFAULT_SEED
    outputs: tuple[str, ...] = ()
    partitions: Mapping[str, Mapping] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if not self.t_end > 0:
            raise ScenarioError("t_end must be positive")
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.dt > self.t_end:
            raise ScenarioError("dt must not exceed t_end")
        for d in self.disturbances:
            if not 0 <= d.at <= self.t_end:
                raise ScenarioError(f"disturbance at {d.at} s lies outside [0, t_end]")

    @property
    def variant(self) -> Variant:
        return self.gains.variant


# -- parsing helpers --------------------------------------------------------------

def _field(obj: Mapping, key: str, where: str, kind=float, default=...):
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{where}: missing field '{key}'")
        return default
    try:
        return kind(obj[key])
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: field '{key}' has invalid value {obj[key]!r}") from None


_KIND_ALIASES = {
    "machine": NodeKind.MACHINE, "m": NodeKind.MACHINE,
    "freq_dependent": NodeKind.FREQ_DEPENDENT, "freqdependent": NodeKind.FREQ_DEPENDENT, "f": NodeKind.FREQ_DEPENDENT,
    "passive": NodeKind.PASSIVE, "p": NodeKind.PASSIVE,
}


def network_from_dict(doc: Mapping) -> PowerNetwork:
    if not isinstance(doc, Mapping):
        raise ScenarioError("network: expected an object")
    nodes = []
    for k, nd in enumerate(doc.get("nodes", [])):
        where = f"node #{k}" + (f" (id {nd.get('id')})" if isinstance(nd, Mapping) and "id" in nd else "")
        if not isinstance(nd, Mapping):
            raise ScenarioError(f"{where}: expected an object")
        kind_name = str(_field(nd, "kind", where, str)).lower()
        if kind_name not in _KIND_ALIASES:
            raise ScenarioError(f"{where}: unknown kind {kind_name!r}")
        price = nd.get("price")
        nodes.append(Node(
            id=_field(nd, "id", where, int),
            kind=_KIND_ALIASES[kind_name],
            inertia=_field(nd, "inertia", where, default=0.0),
            damping=_field(nd, "damping", where, default=0.0),
            injection=_field(nd, "injection", where, default=0.0),
            price=None if price is None else _field(nd, "price", where),
        ))
    if not nodes:
        raise ScenarioError("network: no nodes")
    edges = []
    for k, ed in enumerate(doc.get("edges", [])):
        if not isinstance(ed, Mapping):
            raise ScenarioError(f"edge #{k}: expected an object")
        where = f"edge #{k} ({ed.get('i')}-{ed.get('j')})"
        edges.append(Edge(_field(ed, "i", where, int), _field(ed, "j", where, int),
                          _field(ed, "susceptance", where)))
    return PowerNetwork(tuple(nodes), tuple(edges), f_nominal=float(doc.get("f_nominal", 60.0)),
                        base_mva=float(doc.get("base_mva", 100.0)), name=str(doc.get("name", "")))


def network_to_dict(net: PowerNetwork) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": net.name,
        "f_nominal": net.f_nominal,
        "base_mva": net.base_mva,
        "nodes": [{"id": n.id, "kind": n.kind.value, "inertia": n.inertia, "damping": n.damping,
                   "injection": n.injection, "price": n.price} for n in net.nodes],
        "edges": [{"i": e.i, "j": e.j, "susceptance": e.susceptance} for e in net.edges],
    }


def generate_prices(net: PowerNetwork, seed: int) -> PowerNetwork:
    """Fill missing prices with alpha = 1/beta, beta ~ U(0, 1], drawn in ascending id over V_K."""
    rng = np.random.default_rng(seed)
    beta = 1.0 - rng.random(len(net.controlled_ids))
    drawn = {int(i): float(1.0 / b) for i, b in zip(net.controlled_ids, beta)}
    missing = {i: a for i, a in drawn.items() if net.node(i).price is None}
    return net.with_prices(missing) if missing else net


def partition_from_dict(doc: Mapping, net: PowerNetwork) -> Partition:
    kind = doc.get("kind", "areas")
    if kind == "single":
        return single_area(net)
    if kind == "per_node":
        comm = doc.get("comm")
        pairs = None if comm is None else [(int(c[0]), int(c[1])) for c in comm]
        return per_node(net, pairs, float(doc.get("weight", 1.0)))
    if kind == "areas":
        if "areas" not in doc:
            raise ScenarioError("partition: missing field 'areas'")
        areas = {int(r): [int(i) for i in members] for r, members in doc["areas"].items()}
        weights = {}
        for c in doc.get("comm", []):
            if len(c) not in (2, 3):
                raise ScenarioError(f"partition: bad communication entry {c!r}")
            weights[(int(c[0]), int(c[1]))] = float(c[2]) if len(c) == 3 else 1.0
        return from_area_lists(net, areas, weights)
    raise ScenarioError(f"partition: unknown kind {kind!r}")


def partition_to_dict(part: Partition) -> dict:
    return {
        "kind": "areas",
        "areas": {str(r): part.members(r) for r in part.area_ids},
        "comm": [[r, q, w] for (r, q), w in sorted(part.comm_weights.items())],
    }


def default_partition(net: PowerNetwork, variant: Variant) -> Partition:
    if variant is Variant.DPIAC:
        return per_node(net)
    return single_area(net)


def partition_for(net: PowerNetwork, spec: ScenarioSpec, variant: Variant | str | None = None) -> Partition:
    variant = spec.variant if variant is None else Variant(variant)
    doc = spec.partitions.get(variant.value)
    if variant is Variant.GBPIAC:
        return single_area(net)
    return default_partition(net, variant) if doc is None else partition_from_dict(doc, net)


def _check(net: PowerNetwork, part: Partition):
    problems = validate_network(net, part)
    if problems:
        raise ScenarioError("invalid scenario: " + "; ".join(problems))


def scenario_from_dict(doc: Mapping, base: Path | None = None,
                       variant: str | None = None) -> tuple[PowerNetwork, Partition, ScenarioSpec]:
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario: expected an object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}")
    ref = doc.get("network")
    if ref is None:
        raise ScenarioError("scenario: missing field 'network'")
    if isinstance(ref, str):
        path = Path(ref)
        if not path.is_absolute():
            path = (base or Path.cwd()) / path
            if not path.exists():
                path = Path(str(DATA / ref))
        net_doc = _read_json(path)
    else:
        net_doc = ref
    seed = int(doc.get("seed", DEFAULT_SEED))
    net = generate_prices(network_from_dict(net_doc), seed)

    g = doc.get("gains", {})
    chosen = Variant(variant or doc.get("variant", "mlpiac"))
    try:
        gains = ControllerGains(
            k1=_field(g, "k1", "gains", default=0.4), k2=_field(g, "k2", "gains", default=1.6),
            k3=_field(g, "k3", "gains", default=10.0), variant=chosen,
            eta_sum=str(g.get("eta_sum", "MF")),
        )
    except ValueError as exc:
        raise ScenarioError(f"gains: {exc}") from None
    dist = []
    for k, d in enumerate(doc.get("disturbances", [])):
        where = f"disturbance #{k}"
        dist.append(Disturbance(_field(d, "at", where), _field(d, "node", where, int),
                                _field(d, "delta_P", where)))
    spec = ScenarioSpec(
        gains=gains,
        disturbances=tuple(dist),
        t_end=_field(doc, "t_end", "scenario", default=70.0),
        dt=_field(doc, "dt", "scenario", default=1e-3),
        seed=seed,
        outputs=tuple(doc.get("outputs", ())),
        partitions={k: v for k, v in doc.get("partitions", {}).items()},
        name=str(doc.get("name", "")),
    )
    part = partition_for(net, spec)
    _check(net, part)
    for d in spec.disturbances:
        if d.node not in net.index:
            raise ScenarioError(f"disturbance on unknown node {d.node}")
    return net, part, spec


def scenario_to_dict(net: PowerNetwork, part: Partition, spec: ScenarioSpec) -> dict:
    parts = {k: dict(v) for k, v in spec.partitions.items()}
    if part != partition_for(net, spec):
        parts[spec.variant.value] = partition_to_dict(part)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "network": network_to_dict(net),
        "seed": spec.seed,
        "variant": spec.variant.value,
        "gains": {"k1": spec.gains.k1, "k2": spec.gains.k2, "k3": spec.gains.k3, "eta_sum": spec.gains.eta_sum},
        "partitions": parts,
        "disturbances": [{"at": d.at, "node": d.node, "delta_P": d.delta_P} for d in spec.disturbances],
        "t_end": spec.t_end,
        "dt": spec.dt,
        "outputs": list(spec.outputs),
    }


def _read_json(path: Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_scenario(path, variant: str | None = None) -> tuple[PowerNetwork, Partition, ScenarioSpec]:
    path = Path(path)
    if not path.exists() and (DATA / path.name).is_file():
        path = Path(str(DATA / path.name))
    return scenario_from_dict(_read_json(path), base=path.parent, variant=variant)


def builtin_ieee39(seed: int = DEFAULT_SEED) -> tuple[PowerNetwork, dict[str, Partition]]:
    """Bundled 49-node case with the three partition presets."""
    net, _, spec = load_scenario(Path(str(DATA / "scenario_fig3.json")))
    if seed != spec.seed:
        net = generate_prices(network_from_dict(_read_json(Path(str(DATA / "ieee39.json")))), seed)
    parts = {v.value: partition_for(net, spec, v) for v in Variant}
    return net, parts


# -- time series ---------------------------------------------------------------------

GROUPS = ("t", "omega", "freq", "u_s", "omega_s", "lambda", "u")


def timeseries_columns(traj: Trajectory) -> dict[str, np.ndarray]:
    net = traj.net
    f0 = net.f_nominal
    cols: dict[str, np.ndarray] = {"t": traj.times}
    for k, i in enumerate(net.controlled_ids):
        cols[f"omega_{i}"] = traj.omega[:, k] * f0
    for k, i in enumerate(net.controlled_ids):
        cols[f"freq_{i}"] = f0 + traj.omega[:, k] * f0
    cols["u_s"] = traj.u_s
    cols["omega_s"] = traj.omega_s * f0
    for k, r in enumerate(traj.area_ids):
        cols[f"lambda_{r}"] = traj.lam[:, k]
    for k, i in enumerate(net.controlled_ids):
        cols[f"u_{i}"] = traj.u[:, k]
    return cols


def select_columns(names, selectors) -> list[str]:
    """t first, then every column matching a selector (exact name, group name or glob)."""
    if not selectors:
        return list(names)
    out = ["t"]
    for name in names:
        if name == "t":
            continue
        for s in selectors:
            group = name.rsplit("_", 1)[0] if name not in ("u_s", "omega_s") else name
            if name == s or group == s or fnmatch.fnmatchcase(name, s):
                out.append(name)
                break
    return out


def write_timeseries(traj: Trajectory, path, format: str = "csv", selectors=None) -> list[str]:
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    cols = timeseries_columns(traj)
    names = select_columns(list(cols), selectors)
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            data = np.column_stack([cols[n] for n in names])
            for row in data:
                w.writerow([f"{v:.9g}" for v in row])
    elif format == "json":
        doc = {"columns": names, "data": {n: [float(f"{v:.9g}") for v in cols[n]] for n in names}}
        path.write_text(json.dumps(doc) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")
    return names


def read_timeseries(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        names = doc["columns"]
        return names, np.column_stack([doc["data"][n] for n in names])
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
