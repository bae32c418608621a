"""Validation-scheme runners.

A :class:`Scenario` describes the constellation, ground sites, trust topology
and request workload. :func:`run_scenario` wires actors to an
:class:`~spacepki.simkernel.Engine` for the chosen scheme, runs it and
returns a :class:`LatencyReport`.

Schemes:

* ``DELAYED_GROUND``: requester waits for its next ground-station pass; the
  station validates against fresh ground data.
* ``RELAY_GEO``: request relayed LEO -> GEO -> ground validator and back.
* ``IPKI_CASE1``: nearest Spc-VA with a co-located repository replica.
* ``IPKI_CASE2``: nearest Spc-VA which queries a remote repository replica.
* ``SPCPKI_LOCAL``: the requester validates from its own cache.
* ``SPCPKI_DELEGATED``: the requester asks the nearest Spc-CA.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import random
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import __version__
from .actors import (
    DEFAULT_RESPONSE_CACHE_TTL_S,
    ActorId,
    RelyingParty,
    RepositoryState,
    RepositoryUpdateMsg,
    Role,
    RpCache,
    SecurityError,
    StaleUpdateError,
    ValidationAuthority,
    ValidationRequestMsg,
    ValidationResponseMsg,
    bca_publish_delta,
    repository_apply,
    rp_local_validate,
    rp_select_authority,
)
from .geometry import (
    CONSTANTS,
    GEO_ALTITUDE_KM,
    CircularOrbit,
    GroundSite,
    LosConfig,
    NodeGeometry,
    next_visibility_window,
)
from .pki import DEFAULT_CERT_LIFETIME_S, DEFAULT_CRL_INTERVAL_S, SCHEMES
from .simkernel import DEFAULT_WAIT_HORIZON_S, Engine, EventKind, LatencyRecord, RelayModel
from .actors import va_handle_request
from .trust import DEFAULT_MAX_DEPTH, DEFAULT_STALENESS_LIMIT_S
from .worlds import AgencySpec, build_ipki_world, build_spcpki_world

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"


class ConfigurationError(ValueError):
    """Raised with every problem found, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SchemeId(str, enum.Enum):
    DELAYED_GROUND = "DELAYED_GROUND"
    RELAY_GEO = "RELAY_GEO"
    IPKI_CASE1 = "IPKI_CASE1"
    IPKI_CASE2 = "IPKI_CASE2"
    SPCPKI_LOCAL = "SPCPKI_LOCAL"
    SPCPKI_DELEGATED = "SPCPKI_DELEGATED"

    @property
    def uses_spcpki(self) -> bool:
        return self in (SchemeId.SPCPKI_LOCAL, SchemeId.SPCPKI_DELEGATED)


# roles a scheme cannot run without
_REQUIRED_ROLES = {
    SchemeId.DELAYED_GROUND: (Role.GROUND_STATION,),
    SchemeId.RELAY_GEO: (Role.RELAY, Role.GROUND_STATION),
    SchemeId.IPKI_CASE1: (Role.SPC_VA,),
    SchemeId.IPKI_CASE2: (Role.SPC_VA, Role.REPOSITORY),
    SchemeId.SPCPKI_LOCAL: (),
    SchemeId.SPCPKI_DELEGATED: (Role.SPC_CA,),
}

_ORBITING = {Role.SPC_CA, Role.SPC_VA, Role.SPC_RP, Role.REPOSITORY, Role.RELAY}
_GROUNDED = {Role.GRD_CA, Role.GRD_PCA, Role.GRD_BCA, Role.GROUND_STATION}


@dataclass(frozen=True)
class NodeSpec:
    actor: ActorId
    geometry: NodeGeometry
    entity: Optional[str] = None  # certificate holder name, for SPC_RP nodes


@dataclass(frozen=True)
class WorkloadRequest:
    t_s: float
    requester: str
    target: str


@dataclass(frozen=True)
class WorkloadGenerator:
    """Homogeneous arrivals with requester/target pairs drawn under the seed."""

    rate_per_s: float
    start_s: float = 0.0
    count: Optional[int] = None  # None: until the end of the run


@dataclass(frozen=True)
class RevocationEvent:
    t_s: float
    subject: str
    reason: str = "keyCompromise"


@dataclass
class ScenarioOptions:
    relay_capacity_slots: int = 20
    relay_slot_service_s: float = 0.1
    relay_max_queue: Optional[int] = None
    staleness_limit_s: float = DEFAULT_STALENESS_LIMIT_S
    max_depth: int = DEFAULT_MAX_DEPTH
    rp_response_cache_ttl_s: float = DEFAULT_RESPONSE_CACHE_TTL_S
    va_repository_cache_ttl_s: Optional[float] = None  # None: query the repository every time
    crl_refresh_interval_s: float = 12 * 3600.0
    processing_s: dict = field(default_factory=dict)  # role name -> seconds
    window_step_s: float = 10.0
    window_tol_s: float = 0.1
    wait_horizon_s: float = DEFAULT_WAIT_HORIZON_S
    grazing_margin_km: float = 100.0
    min_elevation_deg: float = 5.0
    signature_scheme: str = "mock"
    bca_latitude_deg: float = 0.0  # used when no GRD_BCA node is listed
    bca_longitude_deg: float = 0.0

    @property
    def los(self) -> LosConfig:
        return LosConfig(self.grazing_margin_km, self.min_elevation_deg)

    def problems(self) -> list:
        out = []
        if self.relay_capacity_slots < 1:
            out.append("options.relay_capacity_slots must be >= 1")
        for name in ("relay_slot_service_s", "staleness_limit_s", "crl_refresh_interval_s",
                     "window_step_s", "window_tol_s", "wait_horizon_s"):
            if not getattr(self, name) > 0:
                out.append(f"options.{name} must be positive")
        if self.rp_response_cache_ttl_s < 0:
            out.append("options.rp_response_cache_ttl_s must be non-negative")
        if self.va_repository_cache_ttl_s is not None and self.va_repository_cache_ttl_s < 0:
            out.append("options.va_repository_cache_ttl_s must be non-negative")
        if self.relay_max_queue is not None and self.relay_max_queue < 0:
            out.append("options.relay_max_queue must be non-negative")
        if self.max_depth < 1:
            out.append("options.max_depth must be >= 1")
        if self.signature_scheme not in SCHEMES:
            out.append(f"options.signature_scheme must be one of {sorted(SCHEMES)}")
        for role, seconds in self.processing_s.items():
            if role not in Role.__members__:
                out.append(f"options.processing_s: unknown role {role!r}")
            elif seconds < 0:
                out.append(f"options.processing_s[{role}] must be non-negative")
        return out


@dataclass
class Scenario:
    name: str
    scheme: SchemeId
    nodes: tuple
    agencies: tuple
    space_cas: tuple = ("Spc-CA",)
    requests: tuple = ()
    generator: Optional[WorkloadGenerator] = None
    revocations: tuple = ()
    options: ScenarioOptions = field(default_factory=ScenarioOptions)
    seed: int = 0
    duration_s: float = 3600.0
    defaulted: tuple = ()  # option names filled from defaults when loaded

    def members(self) -> list:
        return [m for a in self.agencies for m in a.members]

    def nodes_with(self, role: Role) -> list:
        return sorted(n.actor for n in self.nodes if n.actor.role == role)

    def node(self, actor: ActorId) -> NodeSpec:
        for n in self.nodes:
            if n.actor == actor:
                return n
        raise KeyError(str(actor))

    def rp_for(self, entity: str) -> Optional[ActorId]:
        for n in self.nodes:
            if n.actor.role == Role.SPC_RP and n.entity == entity:
                return n.actor
        return None

    def with_scheme(self, scheme: SchemeId) -> "Scenario":
        return replace(self, scheme=SchemeId(scheme))

    def workload(self) -> list:
        """Explicit requests plus generated ones, in arrival order."""
        out = list(self.requests)
        g = self.generator
        if g is not None:
            rng = random.Random(self.seed)
            requesters = sorted(n.entity for n in self.nodes if n.actor.role == Role.SPC_RP)
            members = self.members()
            k = 0
            while True:
                t = g.start_s + k / g.rate_per_s
                if t > self.duration_s or (g.count is not None and k >= g.count):
                    break
                req = rng.choice(requesters)
                target = rng.choice([m for m in members if m != req])
                out.append(WorkloadRequest(t, req, target))
                k += 1
        return sorted(out, key=lambda r: r.t_s)

    def intermediate_names(self) -> list:
        return [f"{a.name}-CA{k + 1}" for a in self.agencies for k in range(a.intermediates)]

    def problems(self) -> list:
        out = list(self.options.problems())
        if not self.agencies:
            out.append("trust: at least one agency is required")
        if not self.duration_s > 0:
            out.append("duration_s must be positive")
        members = self.members()
        dupes = sorted(m for m, c in Counter(members).items() if c > 1)
        if dupes:
            out.append(f"trust: duplicate member names {dupes}")
        agency_names = [a.name for a in self.agencies]
        if len(set(agency_names)) != len(agency_names):
            out.append("trust: duplicate agency names")
        for a in self.agencies:
            if a.intermediates < 1:
                out.append(f"trust: agency {a.name} needs at least one intermediate CA")
        if not self.space_cas:
            out.append("trust: at least one space CA name is required")

        seen = set()
        for n in self.nodes:
            if n.actor in seen:
                out.append(f"nodes: duplicate actor {n.actor}")
            seen.add(n.actor)
            if n.actor.role in _ORBITING and not isinstance(n.geometry, CircularOrbit):
                out.append(f"nodes: {n.actor} must have an orbit")
            if n.actor.role in _GROUNDED and not isinstance(n.geometry, GroundSite):
                out.append(f"nodes: {n.actor} must have a ground site")
            if n.actor.role == Role.SPC_RP:
                if n.entity is None:
                    out.append(f"nodes: {n.actor} needs an entity name")
                elif n.entity not in members:
                    out.append(f"nodes: {n.actor} entity {n.entity!r} is not a trust member")
            if n.actor.role == Role.SPC_CA and n.actor.index >= len(self.space_cas):
                out.append(f"nodes: {n.actor} has no matching space CA name")
        entities = [n.entity for n in self.nodes if n.entity is not None]
        if len(set(entities)) != len(entities):
            out.append("nodes: an entity is bound to more than one node")

        for role in _REQUIRED_ROLES[self.scheme]:
            if not self.nodes_with(role):
                out.append(f"scheme {self.scheme.value} needs at least one {role.value} node")

        for i, r in enumerate(self.requests):
            if self.rp_for(r.requester) is None:
                out.append(f"workload[{i}]: requester {r.requester!r} is not bound to an SPC_RP node")
            if r.target not in members:
                out.append(f"workload[{i}]: unknown target {r.target!r}")
            if not 0 <= r.t_s <= self.duration_s:
                out.append(f"workload[{i}]: time {r.t_s} outside [0, {self.duration_s}]")
        if self.generator is not None:
            g = self.generator
            if not g.rate_per_s > 0:
                out.append("workload.generator.rate_per_s must be positive")
            if not self.nodes_with(Role.SPC_RP):
                out.append("workload.generator needs at least one SPC_RP node")
            if len(members) < 2:
                out.append("workload.generator needs at least two trust members")

        revocable = set(members) if self.scheme.uses_spcpki else set(members) | set(self.intermediate_names())
        for i, ev in enumerate(self.revocations):
            if ev.subject not in revocable:
                out.append(f"revocations[{i}]: cannot revoke {ev.subject!r} under {self.scheme.value}")
            if not 0 <= ev.t_s <= self.duration_s:
                out.append(f"revocations[{i}]: time {ev.t_s} outside [0, {self.duration_s}]")
        if self.revocations and self.scheme.uses_spcpki and not any(
                a.index == 0 for a in self.nodes_with(Role.SPC_CA)):
            out.append("revocations under SpcPKI need an SPC_CA:0 node to publish them")
        return out

    def validate(self) -> "Scenario":
        problems = self.problems()
        if problems:
            raise ConfigurationError(problems)
        return self


# -- scenario <-> dict -----------------------------------------------------------


def _geometry_from_dict(d: dict, where: str, errors: list):
    try:
        if "site" in d:
            s = d["site"]
            return GroundSite(float(s["lat_deg"]), float(s["lon_deg"]))
        o = d["orbit"]
        if "geostationary_lon_deg" in o:
            return CircularOrbit.geostationary(float(o["geostationary_lon_deg"]))
        return CircularOrbit(
            float(o["altitude_km"]), float(o.get("inclination_deg", 0.0)),
            float(o.get("raan_deg", 0.0)), float(o.get("phase_deg", 0.0)),
            float(o.get("epoch_s", 0.0)), o.get("period_override_s"))
    except KeyError as e:
        errors.append(f"{where}: missing field {e.args[0]!r}")
    except (TypeError, ValueError) as e:
        errors.append(f"{where}: {e}")
    return None


def _geometry_to_dict(g) -> dict:
    if isinstance(g, GroundSite):
        return {"site": {"lat_deg": g.latitude_deg, "lon_deg": g.longitude_deg}}
    return {"orbit": {"altitude_km": g.altitude_km, "inclination_deg": g.inclination_deg,
                      "raan_deg": g.raan_deg, "phase_deg": g.phase_deg, "epoch_s": g.epoch_s,
                      "period_override_s": g.period_override_s}}


_OPTION_NAMES = [f.name for f in fields(ScenarioOptions)]


def scenario_from_dict(d: dict, name: str = "scenario") -> Scenario:
    """Build and validate a scenario, reporting every problem at once."""
    errors = []
    known = {"schema_version", "name", "scheme", "seed", "duration_s", "nodes", "trust",
             "workload", "revocations", "options", "description"}
    for key in sorted(set(d) - known):
        errors.append(f"unknown top-level field {key!r}")

    try:
        scheme = SchemeId(d.get("scheme", ""))
    except ValueError:
        errors.append(f"scheme: unknown value {d.get('scheme')!r}; "
                      f"expected one of {[s.value for s in SchemeId]}")
        scheme = SchemeId.IPKI_CASE1

    nodes = []
    for i, nd in enumerate(d.get("nodes", [])):
        where = f"nodes[{i}]"
        try:
            actor = ActorId.parse(nd["id"])
        except KeyError:
            errors.append(f"{where}: missing field 'id'")
            continue
        except ValueError:
            errors.append(f"{where}: bad actor id {nd.get('id')!r}")
            continue
        geom = _geometry_from_dict(nd, f"{where} ({nd['id']})", errors)
        if geom is not None:
            nodes.append(NodeSpec(actor, geom, nd.get("entity")))
    if not d.get("nodes"):
        errors.append("nodes: at least one node is required")

    trust = d.get("trust", {})
    agencies = []
    for i, a in enumerate(trust.get("agencies", [])):
        if "name" not in a:
            errors.append(f"trust.agencies[{i}]: missing field 'name'")
            continue
        agencies.append(AgencySpec(a["name"], tuple(a.get("members", ())), int(a.get("intermediates", 1))))
    space_cas = tuple(trust.get("space_cas", ("Spc-CA",)))

    wl = d.get("workload", {})
    requests = []
    for i, r in enumerate(wl.get("requests", [])):
        try:
            requests.append(WorkloadRequest(float(r["t_s"]), r["requester"], r["target"]))
        except KeyError as e:
            errors.append(f"workload.requests[{i}]: missing field {e.args[0]!r}")
    gen = None
    if "generator" in wl:
        g = wl["generator"]
        try:
            gen = WorkloadGenerator(float(g["rate_per_s"]), float(g.get("start_s", 0.0)), g.get("count"))
        except KeyError as e:
            errors.append(f"workload.generator: missing field {e.args[0]!r}")

    revocations = []
    for i, r in enumerate(d.get("revocations", [])):
        try:
            revocations.append(RevocationEvent(float(r["t_s"]), r["subject"], r.get("reason", "keyCompromise")))
        except KeyError as e:
            errors.append(f"revocations[{i}]: missing field {e.args[0]!r}")

    raw_opts = d.get("options", {})
    for key in sorted(set(raw_opts) - set(_OPTION_NAMES)):
        errors.append(f"options: unknown field {key!r}")
    options = ScenarioOptions(**{k: v for k, v in raw_opts.items() if k in _OPTION_NAMES})
    defaulted = tuple(n for n in _OPTION_NAMES if n not in raw_opts)
    for key in ("seed", "duration_s"):
        if key not in d:
            defaulted += (key,)

    scenario = Scenario(
        name=d.get("name", name), scheme=scheme, nodes=tuple(nodes), agencies=tuple(agencies),
        space_cas=space_cas, requests=tuple(requests), generator=gen,
        revocations=tuple(revocations), options=options, seed=int(d.get("seed", 0)),
        duration_s=float(d.get("duration_s", 3600.0)), defaulted=defaulted)
    errors.extend(scenario.problems())
    if errors:
        raise ConfigurationError(errors)
    return scenario


def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "scheme": s.scheme.value,
        "seed": s.seed,
        "duration_s": s.duration_s,
        "nodes": [],
        "trust": {"agencies": [{"name": a.name, "members": list(a.members),
                                "intermediates": a.intermediates} for a in s.agencies],
                  "space_cas": list(s.space_cas)},
        "workload": {"requests": [asdict(r) for r in s.requests]},
        "revocations": [asdict(r) for r in s.revocations],
        "options": asdict(s.options),
    }
    for n in s.nodes:
        nd = {"id": str(n.actor), **_geometry_to_dict(n.geometry)}
        if n.entity is not None:
            nd["entity"] = n.entity
        d["nodes"].append(nd)
    if s.generator is not None:
        d["workload"]["generator"] = asdict(s.generator)
    return d


# -- run -------------------------------------------------------------------------


@dataclass(frozen=True)
class RepoQuery:
    query_id: int
    sender: ActorId


@dataclass(frozen=True)
class RepoReply:
    query_id: int
    state: RepositoryState


def _stats(values) -> dict:
    if not values:
        return {"n": 0, "min": None, "mean": None, "max": None, "p50": None, "p90": None, "p99": None}
    a = np.asarray(values, dtype=float)
    p50, p90, p99 = np.percentile(a, [50, 90, 99])
    return {"n": int(a.size), "min": float(a.min()), "mean": float(a.mean()), "max": float(a.max()),
            "p50": float(p50), "p90": float(p90), "p99": float(p99)}


COMPONENTS = ("total_s", "wait_visibility_s", "propagation_s", "queuing_s", "processing_s")


def summarize(records) -> dict:
    """Summary block of a report; a pure function of the records."""
    done = [r for r in records if r.completed]
    dropped = sum(1 for r in records if not r.completed and r.status == "DROPPED")
    out = {
        "requests": len(records),
        "completed": len(done),
        "dropped": dropped,
        "pending": len(records) - len(done) - dropped,
        "status_counts": dict(sorted(Counter(r.status for r in records).items())),
    }
    for comp in COMPONENTS:
        out[comp] = _stats([getattr(r, comp) for r in done])
    return out


@dataclass
class LatencyReport:
    header: dict
    records: list
    summary: dict
    workload_digest: str
    trace_digest: str
    trace: list = field(default_factory=list, repr=False)  # JSON lines

    @property
    def scheme(self) -> str:
        return self.header["scheme"]

    @property
    def mean_total_s(self) -> Optional[float]:
        return self.summary["total_s"]["mean"]

    def record(self, request_id: str) -> LatencyRecord:
        for r in self.records:
            if r.request_id == request_id:
                return r
        raise KeyError(request_id)

    def to_dict(self) -> dict:
        return {"header": self.header, "workload_digest": self.workload_digest,
                "trace_digest": self.trace_digest, "summary": self.summary,
                "records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# header {json.dumps(self.header, sort_keys=True)}\n")
        buf.write(f"# workload_digest {self.workload_digest}\n")
        buf.write(f"# trace_digest {self.trace_digest}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            d = r.to_dict()
            w.writerow([json.dumps(d["hops"]) if c == "hops" else ("" if d[c] is None else d[c])
                        for c in CSV_COLUMNS])
        for metric in ("requests", "completed", "dropped", "pending"):
            w.writerow(["#summary", metric, "count", self.summary[metric]])
        for status, n in self.summary["status_counts"].items():
            w.writerow(["#summary", "status", status, n])
        for comp in COMPONENTS:
            for stat, v in self.summary[comp].items():
                w.writerow(["#summary", comp, stat, "" if v is None else v])
        return buf.getvalue()

    def write(self, path, fmt: str = "json"):
        text = self.to_json() if fmt == "json" else self.to_csv()
        with open(path, "w") as fh:
            fh.write(text)

    def write_trace(self, path):
        with open(path, "w") as fh:
            for line in self.trace:
                fh.write(line + "\n")


CSV_COLUMNS = ("request_id", "scheme", "requester", "target", "status", "t_initiated_s",
               "t_completed_s", "total_s", "wait_visibility_s", "propagation_s", "queuing_s",
               "processing_s", "hops")


def read_csv_records(text: str) -> list:
    """Record rows of a CSV report as dicts (numbers parsed, hops decoded)."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("# ")]
    rows = []
    for row in csv.DictReader(lines):
        if row["request_id"] == "#summary":
            continue
        d = dict(row)
        for k in ("t_initiated_s", "t_completed_s", "total_s", "wait_visibility_s",
                  "propagation_s", "queuing_s", "processing_s"):
            d[k] = float(d[k]) if d[k] != "" else None
        d["hops"] = json.loads(d["hops"])
        rows.append(d)
    return rows


def report_header(s: Scenario) -> dict:
    consts = asdict(CONSTANTS)
    consts["GEO_ALTITUDE_KM"] = GEO_ALTITUDE_KM
    return {
        "tool": "spacepki",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "scheme": s.scheme.value,
        "seed": s.seed,
        "duration_s": s.duration_s,
        "constants": consts,
        "options": asdict(s.options),
        "pki_defaults": {
            "cert_lifetime_s": DEFAULT_CERT_LIFETIME_S,
            "crl_interval_s": DEFAULT_CRL_INTERVAL_S,
        },
        "defaulted": list(s.defaulted),
    }


class _Run:
    """One scheme execution: actors bound to one engine."""

    def __init__(self, s: Scenario):
        self.s = s
        o = s.options
        self.o = o
        self.scheme = s.scheme
        self.engine = Engine(o.los, o.window_step_s, o.window_tol_s, o.wait_horizon_s)
        self.scheme_impl = SCHEMES[o.signature_scheme]
        self.nonce_rid: dict = {}
        self.pending_queries: dict = {}
        self.query_ids = 0
        self.va_cache: dict = {}  # va actor -> (state, fetched_s)
        self.sync_log: list = []  # (time, replica, version, accepted)
        self.rejected_updates = 0

        for n in s.nodes:
            proc = o.processing_s.get(n.actor.role.value, 0.0)
            if n.actor.role == Role.RELAY:
                self.engine.add_relay(n.actor, n.geometry, RelayModel(
                    o.relay_capacity_slots, o.relay_slot_service_s, o.relay_max_queue))
            else:
                self.engine.add_node(n.actor, n.geometry, self._handle, proc)

        if self.scheme.uses_spcpki:
            self._setup_spcpki()
        else:
            self._setup_ipki()

    # -- setup -------------------------------------------------------------------

    def _setup_ipki(self):
        s, o = self.s, self.o
        vas = s.nodes_with(Role.SPC_VA)
        stations = s.nodes_with(Role.GROUND_STATION)
        bcas = s.nodes_with(Role.GRD_BCA)
        if bcas:
            self.publisher_node = bcas[0]
        else:
            self.publisher_node = ActorId(Role.GRD_BCA, 0)
            self.engine.add_node(self.publisher_node,
                                 GroundSite(o.bca_latitude_deg, o.bca_longitude_deg), self._handle)
        self.world = build_ipki_world(
            s.agencies, 0.0, self.scheme_impl, seed=str(s.seed),
            authorities=[f"Spc-VA{a.index}" for a in vas] + [f"Grd-Validator{a.index}" for a in stations],
            bca_actor=self.publisher_node)
        w = self.world
        self.publisher = w.publisher
        repo_nodes = s.nodes_with(Role.REPOSITORY)
        self.vas = {}
        for a in vas:
            self.vas[a] = ValidationAuthority(
                a, w.authorities[f"Spc-VA{a.index}"], w.anchor, o.staleness_limit_s, o.max_depth,
                repository=repo_nodes[0] if (self.scheme == SchemeId.IPKI_CASE2 and repo_nodes) else None)
        self.ground_vas = {a: ValidationAuthority(a, w.authorities[f"Grd-Validator{a.index}"], w.anchor,
                                                  o.staleness_limit_s, o.max_depth)
                           for a in stations}
        if self.scheme == SchemeId.IPKI_CASE1:
            self.replica_targets = vas
        elif self.scheme == SchemeId.IPKI_CASE2:
            self.replica_targets = repo_nodes
        else:
            self.replica_targets = []
        trusted = {self.publisher_node: w.bca.public_key}
        self.replicas = {a: w.seeded_repository(trusted) for a in self.replica_targets}
        for a in self.replica_targets:
            self.publisher.acknowledge(a, RepositoryUpdateMsg(
                self.publisher_node, 0, tuple(self.publisher.certificates.values()),
                tuple(self.publisher.crls.values()), tuple(self.publisher.mapping_tables.values())))
        self.rps = {}
        for a in s.nodes_with(Role.SPC_RP):
            ent = w.entities[s.node(a).entity]
            self.rps[a] = RelyingParty(a, ent.keypair, ent.certificate, w.anchor,
                                       w.required_policies, o.rp_response_cache_ttl_s)

    def _setup_spcpki(self):
        s, o = self.s, self.o
        self.publisher_node = ActorId(Role.SPC_CA, 0)
        self.world = w = build_spcpki_world(s.members(), s.space_cas, 0.0, self.scheme_impl,
                                            seed=str(s.seed), publisher_actor=self.publisher_node)
        self.publisher = w.publisher
        ca_nodes = s.nodes_with(Role.SPC_CA)
        self.vas = {a: ValidationAuthority(a, w.space_cas[s.space_cas[a.index]].state, w.anchor,
                                           o.staleness_limit_s, o.max_depth)
                    for a in ca_nodes}
        self.ground_vas = {}
        self.replica_targets = ca_nodes + s.nodes_with(Role.SPC_RP)
        trusted = {self.publisher_node: w.publisher.keypair.public_key}
        self.replicas = {a: w.seeded_repository(trusted) for a in self.replica_targets}
        for a in self.replica_targets:
            self.publisher.acknowledge(a, RepositoryUpdateMsg(
                self.publisher_node, 0, tuple(self.publisher.certificates.values()),
                tuple(self.publisher.crls.values()), ()))
        self.rps = {}
        for a in s.nodes_with(Role.SPC_RP):
            ent = w.entities[s.node(a).entity]
            self.rps[a] = RelyingParty(a, ent.keypair, ent.certificate, w.anchor,
                                       w.required_policies, o.rp_response_cache_ttl_s)

    # -- routing -----------------------------------------------------------------

    def _choose(self, src: ActorId, candidates) -> ActorId:
        """Nearest visible candidate, else the one whose window opens first."""
        e = self.engine
        geom = e.geometry(src)
        pick = rp_select_authority(geom, [(a, e.geometry(a)) for a in candidates], e.clock, self.o.los)
        if pick is not None:
            return pick
        best = None
        for a in candidates:
            win = next_visibility_window(geom, e.geometry(a), e.clock, self.o.wait_horizon_s,
                                         self.o.los, self.o.window_step_s, self.o.window_tol_s)
            if win is not None and (best is None or (win.start_s, a.index) < best[:2]):
                best = (win.start_s, a.index, a)
        # nothing reachable inside the horizon: the message will be stranded
        return best[2] if best else sorted(candidates)[0]

    # -- events ------------------------------------------------------------------

    def _initiate(self, req: WorkloadRequest, rid: str):
        e = self.engine
        rp_actor = self.s.rp_for(req.requester)
        e.open_request(rid, self.scheme.value, requester=req.requester, target=req.target)
        target = self.world.entities[req.target].certificate
        if self.scheme == SchemeId.SPCPKI_LOCAL:
            repo = self.replicas[rp_actor]
            cache = RpCache(self.world.anchor, dict(repo.certificates), dict(repo.crls),
                            required_policies=self.world.required_policies)
            result = rp_local_validate(cache, target, e.clock, self.o.staleness_limit_s, self.o.max_depth)
            e.complete_request(rid, result.status.value)
            return
        rp = self.rps[rp_actor]
        hit = rp.cached(target, e.clock)
        if hit is not None:
            e.schedule(e.clock, EventKind.TIMER, None, note="rp-cache-hit", request_id=rid)
            e.complete_request(rid, hit.status.value)
            return
        msg = rp.make_request(target, e.clock)
        self.nonce_rid[msg.nonce] = rid
        if self.scheme in (SchemeId.IPKI_CASE1, SchemeId.IPKI_CASE2):
            e.send_message(rp_actor, self._choose(rp_actor, list(self.vas)), msg, rid)
        elif self.scheme == SchemeId.SPCPKI_DELEGATED:
            e.send_message(rp_actor, self._choose(rp_actor, list(self.vas)), msg, rid)
        elif self.scheme == SchemeId.DELAYED_GROUND:
            e.send_message(rp_actor, self._choose(rp_actor, list(self.ground_vas)), msg, rid)
        else:
            relay = self._choose(rp_actor, self.s.nodes_with(Role.RELAY))
            station = self._choose(relay, list(self.ground_vas))
            e.send_message(rp_actor, station, msg, rid, via=relay)

    def _revoke(self, ev: RevocationEvent):
        self.world.revoke(ev.subject, ev.reason, self.engine.clock)
        self._push()

    def _refresh(self, _event=None):
        for crl in self.world.crl_view(self.engine.clock):
            self.publisher.add_crl(crl)
        self._push()
        nxt = self.engine.clock + self.o.crl_refresh_interval_s
        if nxt <= self.s.duration_s:
            self.engine.schedule(nxt, EventKind.TIMER, self._refresh, note="crl-refresh")

    def _push(self):
        e = self.engine
        if self.publisher_node not in e.nodes:
            logger.info("no %s node; updates not disseminated", self.publisher_node)
            return
        for msg in bca_publish_delta(self.publisher, self.replica_targets, e.clock):
            e.send_message(self.publisher_node, msg.destination, msg)

    def _handle(self, engine: Engine, msg):
        me, p = msg.dst, msg.payload
        if isinstance(p, ValidationRequestMsg):
            self._on_request(me, msg)
        elif isinstance(p, ValidationResponseMsg):
            self._on_response(me, p)
        elif isinstance(p, RepositoryUpdateMsg):
            self._on_update(me, p)
        elif isinstance(p, RepoQuery):
            engine.send_message(me, p.sender, RepoReply(p.query_id, self.replicas[me]), msg.request_id)
        elif isinstance(p, RepoReply):
            req_msg, requester_route = self.pending_queries.pop(p.query_id)
            self.va_cache[me] = (p.state, engine.clock)
            self._respond(me, self.vas[me], p.state, req_msg, requester_route)
        else:
            logger.warning("%s dropped unexpected payload %r", me, type(p).__name__)

    def _on_request(self, me: ActorId, msg):
        e, req = self.engine, msg.payload
        route = (req.requester, msg.src if msg.src in e.relays else None, msg.request_id)
        if me in self.ground_vas:
            view = self._ground_view()
            self._respond(me, self.ground_vas[me], view, req, route)
            return
        va = self.vas[me]
        if va.needs_repository_roundtrip:
            ttl = self.o.va_repository_cache_ttl_s
            cached = self.va_cache.get(me)
            if ttl is not None and cached is not None and e.clock - cached[1] <= ttl:
                self._respond(me, va, cached[0], req, route)
                return
            self.query_ids += 1
            self.pending_queries[self.query_ids] = (req, route)
            repo = self._choose(me, self.s.nodes_with(Role.REPOSITORY))
            e.send_message(me, repo, RepoQuery(self.query_ids, me), msg.request_id)
            return
        self._respond(me, va, self.replicas[me], req, route)

    def _ground_view(self) -> RepositoryState:
        w, p = self.world, self.publisher
        crls = {c.issuer_name: c for c in w.crl_view(self.engine.clock)}
        return RepositoryState({}, dict(p.certificates), crls, dict(p.mapping_tables), {}, self.engine.clock)

    def _respond(self, me, va, view, req, route):
        requester, relay, rid = route
        resp = va_handle_request(va, view, req, self.engine.clock)
        self.engine.send_message(me, requester, resp, rid, via=relay)

    def _on_response(self, me: ActorId, resp: ValidationResponseMsg):
        rid = self.nonce_rid.pop(resp.request_nonce, None)
        result = self.rps[me].accept_response(resp, self.engine.clock)
        if rid is None:
            return
        self.engine.complete_request(rid, result.status.value if result else "UNAUTHENTICATED")

    def _on_update(self, me: ActorId, update: RepositoryUpdateMsg):
        try:
            self.replicas[me] = repository_apply(self.replicas[me], update, self.engine.clock)
            accepted = True
        except (SecurityError, StaleUpdateError) as exc:
            logger.info("%s rejected update v%s: %s", me, update.version, exc)
            self.rejected_updates += 1
            accepted = False
        self.publisher.acknowledge(me, update)
        self.sync_log.append((self.engine.clock, me, update.version, accepted))

    # -- driver ------------------------------------------------------------------

    def run(self) -> LatencyReport:
        s, e = self.s, self.engine
        workload = s.workload()
        width = max(5, len(str(len(workload))))
        rids = []
        for k, req in enumerate(workload):
            rid = f"req-{k + 1:0{width}d}"
            rids.append(rid)
            e.schedule(req.t_s, EventKind.TIMER, lambda ev, r=req, i=rid: self._initiate(r, i),
                       note="workload", request_id=rid, requester=req.requester, target=req.target)
        for ev in s.revocations:
            e.schedule(ev.t_s, EventKind.TIMER, lambda _e, r=ev: self._revoke(r),
                       note="revocation", subject=ev.subject)
        if self.replica_targets and self.o.crl_refresh_interval_s <= s.duration_s:
            e.schedule(self.o.crl_refresh_interval_s, EventKind.TIMER, self._refresh, note="crl-refresh")
        e.run_until(s.duration_s)

        # requests stuck behind an occluded link keep accruing wait until the end
        for msg, since in e.stranded.values():
            rec = e.records.get(msg.request_id) if msg.request_id else None
            if rec is not None and not rec.completed:
                rec.wait_visibility_s += s.duration_s - since
        records = [e.records[r] for r in rids if r in e.records]
        wl = [json.dumps({k: t[k] for k in ("time_s", "request_id", "requester", "target")}, sort_keys=True)
              for t in e.trace if t.get("note") == "workload"]
        workload_digest = hashlib.sha256("\n".join(wl).encode()).hexdigest()
        return LatencyReport(report_header(s), records, summarize(records), workload_digest,
                             e.trace_digest(), e.trace_lines())


def prepare_run(s: Scenario) -> _Run:
    """Build the engine and actors without running (for inspection in tests)."""
    return _Run(s.validate())


def run_scenario(s: Scenario) -> LatencyReport:
    return _Run(s.validate()).run()


def run_relay_scheme(s: Scenario) -> LatencyReport:
    if s.scheme != SchemeId.RELAY_GEO:
        raise ConfigurationError([f"expected RELAY_GEO, got {s.scheme.value}"])
    return run_scenario(s)


def run_delayed_scheme(s: Scenario) -> LatencyReport:
    if s.scheme != SchemeId.DELAYED_GROUND:
        raise ConfigurationError([f"expected DELAYED_GROUND, got {s.scheme.value}"])
    return run_scenario(s)


@dataclass
class Comparison:
    reports: dict  # label -> LatencyReport

    def rows(self) -> list:
        out = []
        for rep in self.reports.values():
            t = rep.summary["total_s"]
            out.append({"scenario": rep.header["scenario"], "scheme": rep.scheme,
                        "requests": rep.summary["requests"],
                        "completed": rep.summary["completed"], "mean_total_s": t["mean"],
                        "min_total_s": t["min"], "max_total_s": t["max"], "p90_total_s": t["p90"],
                        "mean_wait_s": rep.summary["wait_visibility_s"]["mean"],
                        "mean_queuing_s": rep.summary["queuing_s"]["mean"],
                        "workload_digest": rep.workload_digest})
        return out

    def to_text(self) -> str:
        def ms(v):
            return f"{v * 1000:10.3f}" if v is not None else f"{'-':>10}"

        lines = [f"{'scenario':<22} {'scheme':<18} {'n':>5} {'done':>5} "
                 f"{'mean ms':>10} {'min ms':>10} {'max ms':>10}"]
        for r in self.rows():
            lines.append(f"{r['scenario']:<22} {r['scheme']:<18} {r['requests']:>5} {r['completed']:>5} "
                         f"{ms(r['mean_total_s'])} {ms(r['min_total_s'])} {ms(r['max_total_s'])}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows(),
                           "reports": {k: v.to_dict() for k, v in self.reports.items()}},
                          indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()


def compare_schemes(base: Scenario, schemes) -> Comparison:
    """Run every scheme on the same geometry and workload."""
    schemes = [SchemeId(x) for x in schemes]
    if not schemes:
        raise ConfigurationError(["compare needs at least one scheme"])
    reports = {}
    for scheme in schemes:
        reports[scheme.value] = run_scenario(base.with_scheme(scheme))
    digests = {r.workload_digest for r in reports.values()}
    assert len(digests) == 1, "schemes saw different workloads"
    return Comparison(reports)
