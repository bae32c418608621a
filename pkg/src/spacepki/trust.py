"""Trust graphs, certification path discovery and path validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .pki import (
    AuthorityError,
    CaState,
    Certificate,
    CertRequest,
    PolicyMappingTable,
    RevocationList,
    issue_certificate,
    verify_signature,
)

DEFAULT_MAX_DEPTH = 6
DEFAULT_STALENESS_LIMIT_S = 24 * 3600.0


class TrustError(Exception):
    pass


class AnchorError(TrustError):
    pass


class ValidationStatus(str, enum.Enum):
    VALID = "VALID"
    EXPIRED = "EXPIRED"
    REVOKED = "REVOKED"
    NO_PATH = "NO_PATH"
    POLICY_VIOLATION = "POLICY_VIOLATION"
    BAD_SIGNATURE = "BAD_SIGNATURE"
    STALE_REVOCATION_DATA = "STALE_REVOCATION_DATA"


CHECK_NAMES = ("structure", "signatures", "validity", "constraints", "revocation", "policy")


@dataclass(frozen=True)
class ValidationResult:
    status: ValidationStatus
    path: tuple
    checked_at_s: float
    detail: str = ""
    checks: Mapping[str, str] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.status is ValidationStatus.VALID

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "path": [f"{c.issuer_name}#{c.serial}->{c.subject_name}" for c in self.path],
            "checked_at_s": self.checked_at_s,
            "detail": self.detail,
            "checks": dict(self.checks),
        }


@dataclass(frozen=True)
class CrossCertificatePair:
    forward: Certificate  # bridge -> principal
    reverse: Certificate  # principal -> bridge

    def __post_init__(self):
        if (self.forward.subject_name != self.reverse.issuer_name
                or self.forward.issuer_name != self.reverse.subject_name):
            raise ValueError("cross-certificate pair names do not mirror each other")


@dataclass(frozen=True)
class PolicyContext:
    required_policies: frozenset = frozenset()
    mapping_table: Optional[PolicyMappingTable] = None

    @classmethod
    def verified(cls, required: Iterable[str], table: Optional[PolicyMappingTable],
                 publisher_public_key: Optional[bytes]) -> "PolicyContext":
        if table is not None and (publisher_public_key is None
                                  or not table.verify(publisher_public_key)):
            raise TrustError(f"mapping table from {table.publisher} fails verification")
        return cls(frozenset(required), table)


class TrustGraph:
    """Issuer -> subject certificate store.

    Instances are treated as immutable snapshots; :meth:`with_certificates`
    returns a new graph. Certificates that do not verify under a key known to
    the graph are refused and listed in ``rejected``.
    """

    def __init__(self, anchors: Iterable[Certificate] = (), certificates: Iterable[Certificate] = ()):
        self._certs: dict = {}
        self._by_issuer: dict = {}
        self._anchors: dict = {}
        self.rejected: list = []
        for a in anchors:
            if not a.is_self_signed or not verify_signature(a, a.subject_public_key):
                raise AnchorError(f"anchor {a.subject_name} is not a valid self-signed certificate")
            self._anchors[a.key] = a
            self._insert(a)
        self._add_all(certificates)

    def _insert(self, cert: Certificate):
        self._certs[cert.key] = cert
        self._by_issuer.setdefault(cert.issuer_name, []).append(cert)

    def _verifies(self, cert: Certificate) -> bool:
        return any(verify_signature(cert, k) for k in self.keys_for(cert.issuer_name))

    def _add_all(self, certificates: Iterable[Certificate]):
        pending = [c for c in certificates if c.key not in self._certs]
        # repeat until no progress so insertion order does not matter
        while pending:
            left = []
            for c in pending:
                if c.key in self._certs:
                    continue
                if self._verifies(c):
                    self._insert(c)
                else:
                    left.append(c)
            if len(left) == len(pending):
                break
            pending = left
        self.rejected.extend(pending)

    def with_certificates(self, certificates: Iterable[Certificate]) -> "TrustGraph":
        g = TrustGraph()
        g._certs = dict(self._certs)
        g._by_issuer = {k: list(v) for k, v in self._by_issuer.items()}
        g._anchors = dict(self._anchors)
        g._add_all(certificates)
        return g

    @property
    def anchors(self) -> tuple:
        return tuple(self._anchors.values())

    @property
    def certificates(self) -> tuple:
        return tuple(self._certs.values())

    def is_anchor(self, cert: Certificate) -> bool:
        return cert.key in self._anchors and self._anchors[cert.key] == cert

    def get(self, issuer_name: str, serial: int) -> Optional[Certificate]:
        return self._certs.get((issuer_name, serial))

    def issued_by(self, issuer_name: str) -> list:
        return list(self._by_issuer.get(issuer_name, ()))

    def keys_for(self, name: str) -> set:
        return {c.subject_public_key for c in self._certs.values() if c.subject_name == name}

    def find_subject(self, subject_name: str) -> list:
        return sorted((c for c in self._certs.values() if c.subject_name == subject_name),
                      key=lambda c: c.key)

    def anchor_named(self, name: str) -> Optional[Certificate]:
        for a in self._anchors.values():
            if a.subject_name == name:
                return a
        return None


def _chain_sort_key(chain):
    return (len(chain), [(c.issuer_name, c.serial) for c in chain])


def discover_paths(graph: TrustGraph, target: Certificate, anchor: Certificate,
                   max_depth: int = DEFAULT_MAX_DEPTH) -> list:
    """All simple certification paths from ``anchor`` to ``target``.

    Chains are tuples, anchor first. A path never revisits a subject name.
    Results are sorted by length, then by the (issuer, serial) sequence.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    if not graph.is_anchor(anchor):
        raise AnchorError(f"{anchor.subject_name} is not a trust anchor of this graph")
    if target.key == anchor.key:
        return [(anchor,)]
    found = []
    stack = [((anchor,), frozenset([anchor.subject_name]))]
    while stack:
        chain, seen = stack.pop()
        for cert in graph.issued_by(chain[-1].subject_name):
            if cert.is_self_signed or cert.subject_name in seen:
                continue
            if len(chain) + 1 > max_depth:
                continue
            if cert.key == target.key:
                if cert == target:
                    found.append(chain + (cert,))
            elif len(chain) + 1 < max_depth:
                stack.append((chain + (cert,), seen | {cert.subject_name}))
    found.sort(key=_chain_sort_key)
    return found


def apply_policy_mapping(table: Optional[PolicyMappingTable], policies: Iterable[str],
                         publisher_public_key: Optional[bytes] = None) -> frozenset:
    if table is None:
        return frozenset(policies)
    if publisher_public_key is not None and not table.verify(publisher_public_key):
        raise TrustError(f"mapping table from {table.publisher} fails verification")
    mapping = table.mapping
    return frozenset(mapping.get(p, p) for p in policies)


def effective_policies(chain, ctx: Optional[PolicyContext]) -> frozenset:
    """Target policies expressed in the relying party's domain.

    Mappings apply only when the chain passes through a cross-certificate;
    the published table overrides the cross-certificate's own mappings.
    """
    target = chain[-1]
    crosses = [c for c in chain[1:] if c.is_cross_certificate]
    if not crosses:
        return target.policy_ids
    mapping = {}
    for c in crosses:
        for issuer_pol, subject_pol in c.policy_mappings:
            mapping[subject_pol] = issuer_pol
    if ctx is not None and ctx.mapping_table is not None:
        mapping.update(ctx.mapping_table.mapping)
    return frozenset(mapping.get(p, p) for p in target.policy_ids)


def _applicable_crls(cert: Certificate, issuer_key: bytes, crl_view) -> list:
    return [crl for crl in crl_view
            if crl.issuer_name == cert.issuer_name and crl.verify(issuer_key)]


def validate_chain(chain, now_s: float, crl_view: Iterable[RevocationList] = (),
                   ctx: Optional[PolicyContext] = None,
                   staleness_limit_s: float = DEFAULT_STALENESS_LIMIT_S,
                   anchors: Optional[Iterable[Certificate]] = None,
                   check_revocation: bool = True) -> ValidationResult:
    """Validate an anchor-first chain at ``now_s``.

    Checks run in a fixed order and the first failure decides the status:
    signatures, validity windows, CA/path-length constraints, revocation,
    policy. Set ``check_revocation=False`` only where revocation data is
    known to be unavailable by design (e.g. authenticating a responder).
    """
    chain = tuple(chain)
    crl_view = tuple(crl_view)
    checks = {name: "skipped" for name in CHECK_NAMES}

    def result(status, detail=""):
        return ValidationResult(status, chain, now_s, detail, dict(checks))

    if not chain:
        checks["structure"] = "fail"
        return result(ValidationStatus.NO_PATH, "empty chain")
    if not chain[0].is_self_signed:
        checks["structure"] = "fail"
        return result(ValidationStatus.NO_PATH, "chain does not start at a self-signed anchor")
    if anchors is not None and chain[0] not in set(anchors):
        checks["structure"] = "fail"
        return result(ValidationStatus.NO_PATH, f"{chain[0].subject_name} is not a trust anchor")
    for prev, cur in zip(chain, chain[1:]):
        if cur.issuer_name != prev.subject_name:
            checks["structure"] = "fail"
            return result(ValidationStatus.NO_PATH,
                          f"{cur.subject_name} not issued by {prev.subject_name}")
    checks["structure"] = "pass"

    if not verify_signature(chain[0], chain[0].subject_public_key):
        checks["signatures"] = "fail"
        return result(ValidationStatus.BAD_SIGNATURE, f"anchor {chain[0].subject_name}")
    for prev, cur in zip(chain, chain[1:]):
        if not verify_signature(cur, prev.subject_public_key):
            checks["signatures"] = "fail"
            return result(ValidationStatus.BAD_SIGNATURE,
                          f"{cur.issuer_name}#{cur.serial} -> {cur.subject_name}")
    checks["signatures"] = "pass"

    for cert in chain:
        if not cert.valid_at(now_s):
            checks["validity"] = "fail"
            when = "not yet valid" if now_s < cert.not_before_s else "expired"
            return result(ValidationStatus.EXPIRED, f"{cert.subject_name} {when}")
    checks["validity"] = "pass"

    n = len(chain)
    for i, cert in enumerate(chain[:-1]):
        if not cert.is_ca:
            checks["constraints"] = "fail"
            return result(ValidationStatus.POLICY_VIOLATION,
                          f"basic constraints: {cert.subject_name} is not a CA")
        below = n - i - 2  # intermediates between this CA and the target
        if cert.path_len_constraint is not None and below > cert.path_len_constraint:
            checks["constraints"] = "fail"
            return result(ValidationStatus.POLICY_VIOLATION,
                          f"basic constraints: path length exceeded below {cert.subject_name}")
    checks["constraints"] = "pass"

    if check_revocation:
        applicable = [_applicable_crls(cur, prev.subject_public_key, crl_view)
                      for prev, cur in zip(chain, chain[1:])]
        # revoked wins over stale so the answer is monotone in the CRL view
        for cert, crls in zip(chain[1:], applicable):
            for crl in crls:
                entry = crl.entry(cert.serial)
                if entry is not None and entry.revocation_time_s <= now_s:
                    checks["revocation"] = "fail"
                    return result(ValidationStatus.REVOKED,
                                  f"{cert.subject_name} (serial {cert.serial}) revoked by "
                                  f"{cert.issuer_name}: {entry.reason}")
        for cert, crls in zip(chain[1:], applicable):
            if not crls:
                checks["revocation"] = "fail"
                return result(ValidationStatus.STALE_REVOCATION_DATA,
                              f"no revocation data from {cert.issuer_name}")
            freshest = max(crls, key=lambda c: c.this_update_s)
            if freshest.next_update_s < now_s - staleness_limit_s:
                checks["revocation"] = "fail"
                return result(ValidationStatus.STALE_REVOCATION_DATA,
                              f"CRL from {cert.issuer_name} expired at {freshest.next_update_s}")
        checks["revocation"] = "pass"

    required = ctx.required_policies if ctx is not None else frozenset()
    if required:
        effective = effective_policies(chain, ctx)
        if not effective & required:
            checks["policy"] = "fail"
            return result(ValidationStatus.POLICY_VIOLATION,
                          f"policies {sorted(effective)} do not meet {sorted(required)}")
    checks["policy"] = "pass"
    return result(ValidationStatus.VALID)


def validate_target(graph: TrustGraph, target: Certificate, anchor: Certificate, now_s: float,
                    crl_view: Iterable[RevocationList] = (), ctx: Optional[PolicyContext] = None,
                    staleness_limit_s: float = DEFAULT_STALENESS_LIMIT_S,
                    max_depth: int = DEFAULT_MAX_DEPTH) -> ValidationResult:
    """Discover paths and validate them in order; the first VALID path wins.

    When no path validates, the result for the shortest path is returned.
    """
    crl_view = tuple(crl_view)
    paths = discover_paths(graph, target, anchor, max_depth)
    if not paths:
        return ValidationResult(ValidationStatus.NO_PATH, (), now_s,
                                f"no path from {anchor.subject_name} to {target.subject_name}",
                                {name: "skipped" for name in CHECK_NAMES})
    first = None
    for path in paths:
        res = validate_chain(path, now_s, crl_view, ctx, staleness_limit_s, graph.anchors)
        if res.valid:
            return res
        first = first or res
    return first


def cross_certify(bca: CaState, pca: CaState, now_s: float, mappings: Iterable = (),
                  policy_ids: Iterable[str] = ()) -> CrossCertificatePair:
    """Mutual certification between a bridge CA and a principal CA."""
    for party in (bca, pca):
        if not party.is_ca:
            raise AuthorityError(f"{party.name} is not a certification authority")
    forward = issue_certificate(bca, CertRequest(
        subject_name=pca.name, public_key=pca.public_key, is_ca=True,
        policy_ids=frozenset(policy_ids), policy_mappings=tuple(tuple(m) for m in mappings),
    ), now_s)
    reverse = issue_certificate(pca, CertRequest(
        subject_name=bca.name, public_key=bca.public_key, is_ca=True,
        policy_ids=frozenset(policy_ids), policy_mappings=(),
    ), now_s)
    return CrossCertificatePair(forward, reverse)
