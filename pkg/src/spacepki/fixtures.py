"""JSON trust fixtures: certificates, CRLs, anchors and mapping tables.

Layout::

    {"schema_version": "1.0",
     "anchors": [cert, ...], "certificates": [cert, ...],
     "crls": [crl, ...], "mapping_tables": [table, ...],
     "required_policies": ["..."]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .pki import Certificate, PolicyMappingTable, RevocationList, verify_signature
from .trust import PolicyContext, TrustGraph

FIXTURE_SCHEMA_VERSION = "1.0"


class FixtureError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Fixture:
    anchors: list
    certificates: list
    crls: list = field(default_factory=list)
    mapping_tables: list = field(default_factory=list)
    required_policies: frozenset = frozenset()
    description: str = ""

    def graph(self) -> TrustGraph:
        return TrustGraph(self.anchors, self.certificates)

    def anchor(self, name: str) -> Certificate:
        for a in self.anchors:
            if a.subject_name == name:
                return a
        raise KeyError(f"no anchor named {name!r}")

    def subject(self, name: str) -> Certificate:
        """The unique non-anchor certificate for ``name``."""
        found = [c for c in self.certificates if c.subject_name == name and not c.is_self_signed]
        if not found:
            raise KeyError(f"no certificate for subject {name!r}")
        if len(found) > 1:
            raise KeyError(f"subject {name!r} is ambiguous ({len(found)} certificates)")
        return found[0]

    def publisher_keys(self, name: str) -> list:
        return [c.subject_public_key for c in self.anchors + self.certificates if c.subject_name == name]

    def policy_context(self) -> PolicyContext:
        table = self.mapping_tables[-1] if self.mapping_tables else None
        return PolicyContext(self.required_policies, table)

    def to_dict(self) -> dict:
        return {
            "schema_version": FIXTURE_SCHEMA_VERSION,
            "description": self.description,
            "anchors": [c.to_dict() for c in self.anchors],
            "certificates": [c.to_dict() for c in self.certificates],
            "crls": [c.to_dict() for c in self.crls],
            "mapping_tables": [t.to_dict() for t in self.mapping_tables],
            "required_policies": sorted(self.required_policies),
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _parse_list(d: dict, key: str, ctor, errors: list) -> list:
    out = []
    for i, item in enumerate(d.get(key, [])):
        try:
            out.append(ctor(item))
        except (KeyError, TypeError, ValueError) as e:
            errors.append(f"{key}[{i}]: {type(e).__name__}: {e}")
    return out


def fixture_from_dict(d: dict) -> Fixture:
    """Parse and sanity-check a fixture, collecting every problem."""
    errors = []
    version = str(d.get("schema_version", ""))
    if version.split(".")[0] != FIXTURE_SCHEMA_VERSION.split(".")[0]:
        errors.append(f"unsupported fixture schema_version {version!r}")
    anchors = _parse_list(d, "anchors", Certificate.from_dict, errors)
    certs = _parse_list(d, "certificates", Certificate.from_dict, errors)
    crls = _parse_list(d, "crls", RevocationList.from_dict, errors)
    tables = _parse_list(d, "mapping_tables", PolicyMappingTable.from_dict, errors)
    if not anchors:
        errors.append("anchors: at least one trust anchor is required")
    for a in anchors:
        if not a.is_self_signed or not verify_signature(a, a.subject_public_key):
            errors.append(f"anchor {a.subject_name} is not a valid self-signed certificate")
    fx = Fixture(anchors, certs, crls, tables, frozenset(d.get("required_policies", ())),
                 d.get("description", ""))
    for t in tables:
        if not any(t.verify(k) for k in fx.publisher_keys(t.publisher)):
            errors.append(f"mapping table v{t.version} from {t.publisher} fails verification")
    if errors:
        raise FixtureError(errors)
    return fx


def load_fixture(path) -> Fixture:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as e:
        raise FixtureError([f"{path}: {e.strerror}"]) from e
    except json.JSONDecodeError as e:
        raise FixtureError([f"{path}:{e.lineno}:{e.colno}: {e.msg}"]) from e
    return fixture_from_dict(d)


def fixture_from_ipki_world(world, now_s: float = 0.0, description: str = "",
                            anchors: Optional[list] = None) -> Fixture:
    """Snapshot of an iPKI world; anchored at the bridge unless told otherwise."""
    anchors = anchors or [world.anchor]
    certs = world.ca_certificates() + [world.bca.certificate]
    certs += [e.certificate for e in world.entities.values()]
    certs = [c for c in certs if c not in anchors]
    return Fixture(list(anchors), certs, list(world.crl_view(now_s)), [world.mapping_table],
                   world.required_policies, description)
