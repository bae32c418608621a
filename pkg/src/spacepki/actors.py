"""PKI entities as message-driven state: bridge/ground CAs, space VAs and CAs,
relying parties and certificate repositories.

Functions here are the per-message transitions. Binding them to the event
kernel happens in :mod:`spacepki.scenarios`.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .geometry import DEFAULT_LOS, LosConfig, NodeGeometry, node_distance_km, node_los
from .pki import (
    AuthorityError,
    CaState,
    Certificate,
    CertRequest,
    KeyPair,
    PkiError,
    PolicyMappingTable,
    RevocationList,
    canonical_encode,
    issue_certificate,
    sign_bytes,
    verify_bytes,
)
from .trust import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_STALENESS_LIMIT_S,
    CHECK_NAMES,
    PolicyContext,
    TrustGraph,
    ValidationResult,
    ValidationStatus,
    validate_chain,
    validate_target,
)

DEFAULT_RESPONSE_CACHE_TTL_S = 300.0


class Role(str, enum.Enum):
    GRD_CA = "GRD_CA"
    GRD_PCA = "GRD_PCA"
    GRD_BCA = "GRD_BCA"
    SPC_CA = "SPC_CA"
    SPC_VA = "SPC_VA"
    SPC_RP = "SPC_RP"
    REPOSITORY = "REPOSITORY"
    RELAY = "RELAY"
    GROUND_STATION = "GROUND_STATION"


@dataclass(frozen=True, order=True)
class ActorId:
    role: Role
    index: int

    def __str__(self):
        return f"{self.role.value}:{self.index}"

    @classmethod
    def parse(cls, text: str) -> "ActorId":
        role, _, index = text.partition(":")
        return cls(Role(role), int(index))


class SecurityError(PkiError):
    pass


class StaleUpdateError(PkiError):
    pass


class EnrollmentError(PkiError):
    pass


def _cert_bytes(c: Certificate) -> bytes:
    body = canonical_encode(c)
    return struct.pack(">I", len(body)) + body + struct.pack(">I", len(c.signature)) + c.signature


def _lp(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


# -- messages ------------------------------------------------------------------


@dataclass(frozen=True)
class RepositoryUpdateMsg:
    publisher: ActorId
    version: int
    certificates: tuple = ()
    crls: tuple = ()
    mapping_tables: tuple = ()
    destination: Optional[ActorId] = None
    signature: bytes = field(default=b"", repr=False)

    def encode(self) -> bytes:
        out = bytearray(b"RUM\x01")
        out += _lp(str(self.publisher).encode()) + struct.pack(">q", self.version)
        out += struct.pack(">I", len(self.certificates))
        for c in self.certificates:
            out += _cert_bytes(c)
        out += struct.pack(">I", len(self.crls))
        for crl in self.crls:
            out += _lp(crl.encode()) + _lp(crl.signature)
        out += struct.pack(">I", len(self.mapping_tables))
        for t in self.mapping_tables:
            out += _lp(t.encode()) + _lp(t.signature)
        return bytes(out)

    @property
    def payload_key(self) -> tuple:
        return (
            tuple(sorted(c.key for c in self.certificates)),
            tuple(sorted((c.issuer_name, c.this_update_s) for c in self.crls)),
            tuple(sorted((t.publisher, t.version) for t in self.mapping_tables)),
        )


@dataclass(frozen=True)
class ValidationRequestMsg:
    requester: ActorId
    requester_cert: Certificate
    target_cert: Certificate
    nonce: bytes
    sent_s: float
    required_policies: frozenset = frozenset()
    requester_signature: bytes = field(default=b"", repr=False)

    def encode(self) -> bytes:
        out = bytearray(b"VREQ\x01")
        out += _lp(str(self.requester).encode()) + _cert_bytes(self.requester_cert)
        out += _cert_bytes(self.target_cert) + _lp(self.nonce) + struct.pack(">d", self.sent_s)
        for p in sorted(self.required_policies):
            out += _lp(p.encode())
        return bytes(out)


@dataclass(frozen=True)
class ValidationResponseMsg:
    request_nonce: bytes
    result: ValidationResult
    responder: ActorId
    responder_cert: Certificate
    responder_signature: bytes = field(default=b"", repr=False)

    def encode(self) -> bytes:
        r = self.result
        out = bytearray(b"VRSP\x01")
        out += _lp(self.request_nonce) + _lp(r.status.value.encode())
        out += struct.pack(">dI", r.checked_at_s, len(r.path))
        for c in r.path:
            out += _cert_bytes(c)
        out += _lp(r.detail.encode()) + _lp(str(self.responder).encode())
        out += _cert_bytes(self.responder_cert)
        return bytes(out)


def sign_request(msg: ValidationRequestMsg, keypair: KeyPair) -> ValidationRequestMsg:
    return replace(msg, requester_signature=sign_bytes(keypair, msg.encode()))


def sign_response(msg: ValidationResponseMsg, keypair: KeyPair) -> ValidationResponseMsg:
    return replace(msg, responder_signature=sign_bytes(keypair, msg.encode()))


def sign_update(msg: RepositoryUpdateMsg, keypair: KeyPair) -> RepositoryUpdateMsg:
    return replace(msg, signature=sign_bytes(keypair, msg.encode()))


# -- repository --------------------------------------------------------------


@dataclass(frozen=True)
class RepositoryState:
    """Passive certificate store replicated in space.

    Updates produce a new state; callers keep the latest one.
    """

    trusted_publishers: dict = field(default_factory=dict)  # ActorId -> public key
    certificates: dict = field(default_factory=dict)  # (issuer, serial) -> Certificate
    crls: dict = field(default_factory=dict)  # issuer name -> RevocationList
    mapping_tables: dict = field(default_factory=dict)  # publisher name -> table
    versions: dict = field(default_factory=dict)  # ActorId -> last applied version
    last_update_s: float = 0.0

    def crl_view(self) -> tuple:
        return tuple(self.crls[k] for k in sorted(self.crls))

    def graph(self, anchors: Iterable[Certificate]) -> TrustGraph:
        return TrustGraph(anchors, [self.certificates[k] for k in sorted(self.certificates)])

    def content_key(self) -> tuple:
        return (
            tuple(sorted(self.certificates)),
            tuple(sorted((k, v.this_update_s, v.signature) for k, v in self.crls.items())),
            tuple(sorted((k, v.version) for k, v in self.mapping_tables.items())),
        )


def repository_apply(repo: RepositoryState, update: RepositoryUpdateMsg, now_s: float) -> RepositoryState:
    key = repo.trusted_publishers.get(update.publisher)
    if key is None or not verify_bytes(key, update.encode(), update.signature):
        raise SecurityError(f"update from {update.publisher} fails verification")
    last = repo.versions.get(update.publisher, 0)
    if update.version <= last:
        raise StaleUpdateError(f"version {update.version} <= {last} from {update.publisher}")
    certs = dict(repo.certificates)
    for c in update.certificates:
        certs[c.key] = c
    crls = dict(repo.crls)
    for crl in update.crls:
        held = crls.get(crl.issuer_name)
        if held is None or crl.this_update_s > held.this_update_s:
            crls[crl.issuer_name] = crl
    tables = dict(repo.mapping_tables)
    for t in update.mapping_tables:
        held = tables.get(t.publisher)
        if held is None or t.version > held.version:
            tables[t.publisher] = t
    versions = dict(repo.versions)
    versions[update.publisher] = update.version
    return replace(repo, certificates=certs, crls=crls, mapping_tables=tables,
                   versions=versions, last_update_s=now_s)


@dataclass
class PublisherState:
    """Ground truth held by a publishing authority (Grd-BCA or Spc-CA) plus
    what each repository replica has acknowledged."""

    actor: ActorId
    keypair: KeyPair
    certificates: dict = field(default_factory=dict)
    crls: dict = field(default_factory=dict)
    mapping_tables: dict = field(default_factory=dict)
    acked: dict = field(default_factory=dict)
    next_version: int = 1

    def add_certificates(self, certs: Iterable[Certificate]):
        for c in certs:
            self.certificates[c.key] = c

    def add_crl(self, crl: RevocationList):
        held = self.crls.get(crl.issuer_name)
        if held is None or crl.this_update_s > held.this_update_s:
            self.crls[crl.issuer_name] = crl

    def add_mapping_table(self, table: PolicyMappingTable):
        held = self.mapping_tables.get(table.publisher)
        if held is None or table.version > held.version:
            self.mapping_tables[table.publisher] = table

    def _acked(self, replica: ActorId) -> dict:
        return self.acked.setdefault(replica, {"certs": set(), "crls": {}, "tables": {}})

    def delta(self, replica: ActorId) -> tuple:
        a = self._acked(replica)
        certs = tuple(self.certificates[k] for k in sorted(self.certificates) if k not in a["certs"])
        crls = tuple(self.crls[k] for k in sorted(self.crls)
                     if a["crls"].get(k) != self.crls[k].this_update_s)
        tables = tuple(self.mapping_tables[k] for k in sorted(self.mapping_tables)
                       if a["tables"].get(k) != self.mapping_tables[k].version)
        return certs, crls, tables

    def acknowledge(self, replica: ActorId, msg: RepositoryUpdateMsg):
        a = self._acked(replica)
        a["certs"].update(c.key for c in msg.certificates)
        for crl in msg.crls:
            if crl.this_update_s >= a["crls"].get(crl.issuer_name, float("-inf")):
                a["crls"][crl.issuer_name] = crl.this_update_s
        for t in msg.mapping_tables:
            if t.version >= a["tables"].get(t.publisher, 0):
                a["tables"][t.publisher] = t.version

    def snapshot(self) -> tuple:
        return (
            tuple(sorted(self.certificates)),
            tuple(sorted((k, v.this_update_s, v.signature) for k, v in self.crls.items())),
            tuple(sorted((k, v.version) for k, v in self.mapping_tables.items())),
        )


def bca_publish_delta(publisher: PublisherState, repo_targets: Iterable[ActorId], now_s: float) -> list:
    """One signed update per replica carrying everything it has not acknowledged.

    Only the latest CRL per issuer is sent, so a replica that missed several
    revocations receives one cumulative list.
    """
    out = []
    for replica in repo_targets:
        certs, crls, tables = publisher.delta(replica)
        if not (certs or crls or tables):
            continue
        msg = RepositoryUpdateMsg(publisher.actor, publisher.next_version, certs, crls, tables,
                                  destination=replica)
        publisher.next_version += 1
        out.append(sign_update(msg, publisher.keypair))
    return out


def bca_bootstrap(bca: CaState, authority: CaState, now_s: float, as_ca: bool = False,
                  policy_ids: Iterable[str] = ()) -> Certificate:
    """Ground root certifies an in-space authority (Spc-VA, or Spc-CA with ``as_ca``)."""
    if bca.certificate is None or not bca.certificate.is_self_signed or not bca.is_ca:
        raise AuthorityError(f"{bca.name} is not a self-signed root")
    cert = issue_certificate(bca, CertRequest(
        subject_name=authority.name, public_key=authority.public_key, is_ca=as_ca,
        path_len_constraint=0 if as_ca else None, policy_ids=frozenset(policy_ids),
    ), now_s)
    authority.certificate = cert
    return cert


# -- validation authority ------------------------------------------------------


def _rejection(req_nonce, reason: str, now_s: float) -> ValidationResult:
    return ValidationResult(ValidationStatus.BAD_SIGNATURE, (), now_s, reason,
                            {name: "skipped" for name in CHECK_NAMES})


@dataclass
class ValidationAuthority:
    """Spc-VA, or an Spc-CA acting as validator. ``repository`` is set when
    the repository is hosted on another satellite."""

    actor: ActorId
    signer: CaState
    anchor: Certificate
    staleness_limit_s: float = DEFAULT_STALENESS_LIMIT_S
    max_depth: int = DEFAULT_MAX_DEPTH
    repository: Optional[ActorId] = None

    @property
    def needs_repository_roundtrip(self) -> bool:
        return self.repository is not None


def va_handle_request(va: ValidationAuthority, repo_view: RepositoryState,
                      req: ValidationRequestMsg, now_s: float) -> ValidationResponseMsg:
    graph = repo_view.graph([va.anchor])
    crls = repo_view.crl_view()

    def respond(result):
        msg = ValidationResponseMsg(req.nonce, result, va.actor, va.signer.certificate)
        return sign_response(msg, va.signer.keypair)

    if not verify_bytes(req.requester_cert.subject_public_key, req.encode(), req.requester_signature):
        return respond(_rejection(req.nonce, "request signature invalid", now_s))
    requester = validate_target(graph.with_certificates([req.requester_cert]), req.requester_cert,
                                va.anchor, now_s, crls, None, va.staleness_limit_s, va.max_depth)
    if not requester.valid:
        return respond(_rejection(
            req.nonce, f"requester not authenticated: {requester.status.value} {requester.detail}",
            now_s))

    table = repo_view.mapping_tables.get(va.anchor.subject_name)
    if table is not None and not table.verify(va.anchor.subject_public_key):
        table = None
    ctx = PolicyContext(frozenset(req.required_policies), table)
    result = validate_target(graph.with_certificates([req.target_cert]), req.target_cert,
                             va.anchor, now_s, crls, ctx, va.staleness_limit_s, va.max_depth)
    return respond(result)


# -- relying party -------------------------------------------------------------


@dataclass
class RpCache:
    """Material held on board for local validation."""

    anchor: Certificate
    certificates: dict = field(default_factory=dict)
    crls: dict = field(default_factory=dict)
    mapping_table: Optional[PolicyMappingTable] = None
    required_policies: frozenset = frozenset()

    def add_crl(self, crl: RevocationList):
        held = self.crls.get(crl.issuer_name)
        if held is None or crl.this_update_s > held.this_update_s:
            self.crls[crl.issuer_name] = crl


def rp_local_validate(cache: RpCache, target: Certificate, now_s: float,
                      staleness_limit_s: float = DEFAULT_STALENESS_LIMIT_S,
                      max_depth: int = DEFAULT_MAX_DEPTH) -> ValidationResult:
    graph = TrustGraph([cache.anchor], [cache.certificates[k] for k in sorted(cache.certificates)])
    graph = graph.with_certificates([target])
    ctx = PolicyContext(cache.required_policies, cache.mapping_table)
    crls = tuple(cache.crls[k] for k in sorted(cache.crls))
    return validate_target(graph, target, cache.anchor, now_s, crls, ctx, staleness_limit_s, max_depth)


def rp_select_authority(rp_geometry: NodeGeometry, candidates, now_s: float,
                        los: LosConfig = DEFAULT_LOS) -> Optional[ActorId]:
    """Nearest candidate in line of sight; ties go to the lower index."""
    best = None
    for actor, geom in candidates:
        if not node_los(rp_geometry, geom, now_s, los):
            continue
        key = (node_distance_km(rp_geometry, geom, now_s), actor.index, actor)
        if best is None or key < best:
            best = key
    return None if best is None else best[2]


@dataclass
class RelyingParty:
    actor: ActorId
    keypair: KeyPair
    certificate: Certificate
    response_anchor: Certificate
    required_policies: frozenset = frozenset()
    cache_ttl_s: float = DEFAULT_RESPONSE_CACHE_TTL_S
    outstanding: dict = field(default_factory=dict)  # nonce -> target key
    response_cache: dict = field(default_factory=dict)  # target key -> (result, received_s)
    counter: int = 0

    def next_nonce(self) -> bytes:
        self.counter += 1
        return hashlib.sha256(f"{self.actor}|{self.counter}".encode()).digest()[:16]

    def make_request(self, target: Certificate, now_s: float) -> ValidationRequestMsg:
        nonce = self.next_nonce()
        msg = ValidationRequestMsg(self.actor, self.certificate, target, nonce, now_s,
                                   self.required_policies)
        self.outstanding[nonce] = target.key
        return sign_request(msg, self.keypair)

    def cached(self, target: Certificate, now_s: float) -> Optional[ValidationResult]:
        hit = self.response_cache.get(target.key)
        if hit is not None and now_s - hit[1] <= self.cache_ttl_s:
            return hit[0]
        return None

    def authenticate(self, resp: ValidationResponseMsg, now_s: float) -> bool:
        chain = (self.response_anchor, resp.responder_cert)
        if resp.responder_cert == self.response_anchor:
            chain = (self.response_anchor,)
        auth = validate_chain(chain, now_s, check_revocation=False, anchors=[self.response_anchor])
        return auth.valid and verify_bytes(resp.responder_cert.subject_public_key, resp.encode(),
                                           resp.responder_signature)

    def accept_response(self, resp: ValidationResponseMsg, now_s: float) -> Optional[ValidationResult]:
        """Returns the result, or None when the response is discarded."""
        if resp.request_nonce not in self.outstanding:
            return None
        if not self.authenticate(resp, now_s):
            return None
        target_key = self.outstanding.pop(resp.request_nonce)
        if self.cache_ttl_s > 0:
            self.response_cache[target_key] = (resp.result, now_s)
        return resp.result


# -- space CA enrolment ------------------------------------------------------


@dataclass(frozen=True)
class EnrollmentRequest:
    cert_id: Certificate
    new_public_key: bytes
    nonce: bytes
    pop_signature: bytes = field(repr=False)  # by the new key
    id_signature: bytes = field(repr=False)  # by the Cert_ID key

    @staticmethod
    def message(nonce: bytes, new_public_key: bytes) -> bytes:
        return b"ENROLL\x01" + _lp(nonce) + _lp(new_public_key)


def make_enrollment_request(cert_id: Certificate, id_keypair: KeyPair, new_keypair: KeyPair,
                            nonce: bytes) -> EnrollmentRequest:
    m = EnrollmentRequest.message(nonce, new_keypair.public_key)
    return EnrollmentRequest(cert_id, new_keypair.public_key, nonce,
                             sign_bytes(new_keypair, m), sign_bytes(id_keypair, m))


@dataclass
class SpaceCa:
    actor: ActorId
    state: CaState
    ground_anchor: Certificate
    ground_crls: dict = field(default_factory=dict)
    publisher: Optional[PublisherState] = None
    policy_ids: frozenset = frozenset()
    seen_nonces: set = field(default_factory=set)


def spc_ca_enroll(spc_ca: SpaceCa, request: EnrollmentRequest, now_s: float,
                  orbital_binding=None) -> Certificate:
    """Authenticate a Cert_ID holder and issue its in-space certificate."""
    if request.nonce in spc_ca.seen_nonces:
        raise EnrollmentError("replayed enrolment nonce")
    crls = tuple(spc_ca.ground_crls[k] for k in sorted(spc_ca.ground_crls))
    check = validate_chain((spc_ca.ground_anchor, request.cert_id), now_s, crls,
                           anchors=[spc_ca.ground_anchor])
    if not check.valid:
        raise EnrollmentError(f"identity certificate rejected: {check.status.value} {check.detail}")
    m = EnrollmentRequest.message(request.nonce, request.new_public_key)
    if not verify_bytes(request.new_public_key, m, request.pop_signature):
        raise EnrollmentError("proof of possession fails")
    if not verify_bytes(request.cert_id.subject_public_key, m, request.id_signature):
        raise EnrollmentError("identity signature fails")
    spc_ca.seen_nonces.add(request.nonce)
    cert = issue_certificate(spc_ca.state, CertRequest(
        subject_name=request.cert_id.subject_name, public_key=request.new_public_key,
        policy_ids=spc_ca.policy_ids or request.cert_id.policy_ids,
        orbital_binding=orbital_binding,
    ), now_s)
    if spc_ca.publisher is not None:
        spc_ca.publisher.add_certificates([cert])
    return cert
