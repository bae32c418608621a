"""Builders for complete trust worlds.

``build_ipki_world`` creates a bridge CA cross-certified with one principal CA
per agency, intermediate CAs below each principal, end-entity certificates,
a signed policy mapping table and bridge-certified validation authorities.
``build_spcpki_world`` creates a ground root, in-space CAs bootstrapped by
it, identity certificates and the in-space certificates obtained by
enrolment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .actors import (
    ActorId,
    PublisherState,
    RepositoryState,
    Role,
    RpCache,
    SpaceCa,
    bca_bootstrap,
    make_enrollment_request,
    spc_ca_enroll,
)
from .pki import (
    MOCK,
    CaState,
    Certificate,
    CertRequest,
    KeyPair,
    create_root_ca,
    issue_certificate,
    refresh_crl,
    revoke_certificate,
    sign_mapping_table,
)
from .trust import CrossCertificatePair, PolicyContext, TrustGraph, cross_certify

BRIDGE_NAME = "Grd-BCA"
BRIDGE_POLICY = "bridge:medium"
SPC_ROOT_NAME = "Grd-CA"
SPC_POLICY = "spcpki:medium"


def agency_policy(agency: str) -> str:
    return f"{agency}:medium"


@dataclass
class AgencySpec:
    name: str
    members: tuple = ()
    intermediates: int = 1


@dataclass
class EndEntity:
    name: str
    keypair: KeyPair
    certificate: Certificate
    domain: str
    id_keypair: Optional[KeyPair] = None
    id_certificate: Optional[Certificate] = None


class _Keys:
    def __init__(self, scheme, seed: str):
        self.scheme = scheme
        self.seed = seed

    def __call__(self, name: str) -> KeyPair:
        return self.scheme.keygen(f"{self.seed}/{name}".encode())


def _all_crls(cas: Iterable[CaState], now_s: float) -> tuple:
    out = []
    for ca in cas:
        refresh_crl(ca, now_s)
        out.append(ca.crl)
    return tuple(out)


@dataclass
class IpkiWorld:
    bca: CaState
    pcas: dict
    intermediates: dict  # agency -> [CaState, ...] top-down
    cross_pairs: dict  # agency -> CrossCertificatePair
    entities: dict  # name -> EndEntity
    mapping_table: object
    authorities: dict = field(default_factory=dict)  # name -> CaState (VA / ground validators)
    publisher: Optional[PublisherState] = None
    keys: Optional[_Keys] = None

    @property
    def anchor(self) -> Certificate:
        return self.bca.certificate

    @property
    def required_policies(self) -> frozenset:
        return frozenset([BRIDGE_POLICY])

    def all_cas(self) -> list:
        out = [self.bca]
        for agency in self.pcas:
            out.append(self.pcas[agency])
            out.extend(self.intermediates[agency])
        return out

    def issuer_of(self, subject_name: str) -> tuple:
        """(issuing CaState, certificate) for an end entity or intermediate CA.

        For a principal CA this is the bridge and its forward cross-certificate.
        """
        if subject_name in self.entities:
            cert = self.entities[subject_name].certificate
        elif any(p.name == subject_name for p in self.pcas.values()):
            agency = next(a for a, p in self.pcas.items() if p.name == subject_name)
            cert = self.cross_pairs[agency].forward
        else:
            cert = None
            for ca in self.all_cas():
                if ca.name == subject_name and not ca.certificate.is_self_signed:
                    cert = ca.certificate
        if cert is None:
            raise KeyError(subject_name)
        for ca in self.all_cas():
            if ca.name == cert.issuer_name:
                return ca, cert
        raise KeyError(cert.issuer_name)

    def ca_certificates(self) -> list:
        """Everything a repository needs for path building."""
        out = []
        for agency in self.pcas:
            pair = self.cross_pairs[agency]
            out += [pair.forward, pair.reverse, self.pcas[agency].certificate]
            out += [ca.certificate for ca in self.intermediates[agency]]
        return out

    def crl_view(self, now_s: float) -> tuple:
        """Fresh CRLs as known on the ground."""
        return _all_crls(self.all_cas(), now_s)

    def ground_graph(self) -> TrustGraph:
        certs = self.ca_certificates() + [e.certificate for e in self.entities.values()]
        return TrustGraph([self.anchor], certs)

    def policy_context(self) -> PolicyContext:
        return PolicyContext.verified(self.required_policies, self.mapping_table,
                                      self.bca.public_key)

    def revoke(self, subject_name: str, reason: str, now_s: float):
        ca, cert = self.issuer_of(subject_name)
        crl = revoke_certificate(ca, cert.serial, reason, now_s)
        if self.publisher is not None:
            self.publisher.add_crl(crl)
        return crl

    def add_authority(self, name: str, now_s: float = 0.0) -> CaState:
        state = CaState(name, self.keys(name))
        bca_bootstrap(self.bca, state, now_s)
        self.authorities[name] = state
        return state

    def seeded_repository(self, trusted: dict, now_s: float = 0.0) -> RepositoryState:
        """A replica holding the publisher's current ground truth."""
        p = self.publisher
        return RepositoryState(
            trusted_publishers=dict(trusted),
            certificates=dict(p.certificates),
            crls=dict(p.crls),
            mapping_tables=dict(p.mapping_tables),
            last_update_s=now_s,
        )


def build_ipki_world(agencies: Iterable[AgencySpec], now_s: float = 0.0, scheme=MOCK,
                     seed: str = "0", authorities: Iterable[str] = (),
                     bca_actor: ActorId = ActorId(Role.GRD_BCA, 0)) -> IpkiWorld:
    keys = _Keys(scheme, seed)
    agencies = list(agencies)
    bca = create_root_ca(BRIDGE_NAME, keys(BRIDGE_NAME), now_s, policy_ids=[BRIDGE_POLICY])
    pcas, intermediates, pairs, entities = {}, {}, {}, {}
    for spec in agencies:
        policy = agency_policy(spec.name)
        pca = create_root_ca(f"{spec.name}-PCA", keys(f"{spec.name}-PCA"), now_s, policy_ids=[policy])
        chain, parent = [], pca
        for k in range(spec.intermediates):
            name = f"{spec.name}-CA{k + 1}"
            ca = CaState(name, keys(name))
            ca.certificate = issue_certificate(parent, CertRequest(
                subject_name=name, public_key=ca.public_key, is_ca=True,
                policy_ids=frozenset([policy])), now_s)
            refresh_crl(ca, now_s)
            chain.append(ca)
            parent = ca
        for member in spec.members:
            kp = keys(member)
            cert = issue_certificate(parent, CertRequest(
                subject_name=member, public_key=kp.public_key,
                policy_ids=frozenset([policy])), now_s)
            entities[member] = EndEntity(member, kp, cert, spec.name)
        pairs[spec.name] = cross_certify(bca, pca, now_s, mappings=[(BRIDGE_POLICY, policy)])
        pcas[spec.name] = pca
        intermediates[spec.name] = chain

    table = sign_mapping_table(
        bca.keypair, {agency_policy(s.name): BRIDGE_POLICY for s in agencies}, 1, BRIDGE_NAME)
    world = IpkiWorld(bca, pcas, intermediates, pairs, entities, table, keys=keys)
    for name in authorities:
        world.add_authority(name, now_s)

    publisher = PublisherState(bca_actor, bca.keypair)
    publisher.add_certificates(world.ca_certificates())
    for crl in world.crl_view(now_s):
        publisher.add_crl(crl)
    publisher.add_mapping_table(table)
    world.publisher = publisher
    return world


@dataclass
class SpcpkiWorld:
    ground: CaState
    space_cas: dict  # name -> SpaceCa
    entities: dict
    publisher: PublisherState
    keys: _Keys

    @property
    def anchor(self) -> Certificate:
        return self.ground.certificate

    @property
    def required_policies(self) -> frozenset:
        return frozenset([SPC_POLICY])

    def all_cas(self) -> list:
        return [self.ground] + [s.state for s in self.space_cas.values()]

    def crl_view(self, now_s: float) -> tuple:
        return _all_crls(self.all_cas(), now_s)

    def ca_certificates(self) -> list:
        return [s.state.certificate for s in self.space_cas.values()]

    def rp_cache(self, now_s: float) -> RpCache:
        cache = RpCache(self.anchor, required_policies=self.required_policies)
        for c in self.ca_certificates():
            cache.certificates[c.key] = c
        for crl in self.crl_view(now_s):
            cache.add_crl(crl)
        return cache

    def issuer_of(self, subject_name: str) -> tuple:
        cert = self.entities[subject_name].certificate
        for ca in self.all_cas():
            if ca.name == cert.issuer_name:
                return ca, cert
        raise KeyError(cert.issuer_name)

    def revoke(self, subject_name: str, reason: str, now_s: float):
        ca, cert = self.issuer_of(subject_name)
        crl = revoke_certificate(ca, cert.serial, reason, now_s)
        self.publisher.add_crl(crl)
        return crl

    def seeded_repository(self, trusted: dict, now_s: float = 0.0) -> RepositoryState:
        p = self.publisher
        return RepositoryState(dict(trusted), dict(p.certificates), dict(p.crls),
                               dict(p.mapping_tables), {}, now_s)


def build_spcpki_world(members: Iterable[str], space_ca_names: Iterable[str] = ("Spc-CA",),
                       now_s: float = 0.0, scheme=MOCK, seed: str = "0",
                       publisher_actor: ActorId = ActorId(Role.SPC_CA, 0)) -> SpcpkiWorld:
    keys = _Keys(scheme, seed)
    ground = create_root_ca(SPC_ROOT_NAME, keys(SPC_ROOT_NAME), now_s, policy_ids=[SPC_POLICY])
    space_ca_names = list(space_ca_names)
    if not space_ca_names:
        raise ValueError("at least one space CA is required")
    space = {}
    for i, name in enumerate(space_ca_names):
        state = CaState(name, keys(name))
        bca_bootstrap(ground, state, now_s, as_ca=True, policy_ids=[SPC_POLICY])
        refresh_crl(state, now_s)
        space[name] = SpaceCa(ActorId(Role.SPC_CA, i), state, ground.certificate,
                              policy_ids=frozenset([SPC_POLICY]))
    primary = space[space_ca_names[0]]
    publisher = PublisherState(publisher_actor, primary.state.keypair)
    primary.publisher = publisher
    for s in space.values():
        s.ground_crls[ground.name] = ground.crl

    entities = {}
    for k, member in enumerate(members):
        id_kp = keys(f"{member}/id")
        cert_id = issue_certificate(ground, CertRequest(
            subject_name=member, public_key=id_kp.public_key,
            policy_ids=frozenset([SPC_POLICY])), now_s)
        kp = keys(member)
        req = make_enrollment_request(cert_id, id_kp, kp, f"enroll/{k}".encode())
        cert_a = spc_ca_enroll(primary, req, now_s)
        entities[member] = EndEntity(member, kp, cert_a, "spcpki", id_kp, cert_id)

    world = SpcpkiWorld(ground, space, entities, publisher, keys)
    publisher.add_certificates(world.ca_certificates())
    for crl in world.crl_view(now_s):
        publisher.add_crl(crl)
    return world


def build_bridge_world(scheme=MOCK, seed: str = "bridge") -> IpkiWorld:
    """Two agencies joined by the bridge: PKI1 holds the relying party SatB and
    PKI2 the target SatA, so SatA chains Grd-BCA -> PKI2-PCA -> PKI2-CA1 -> SatA."""
    return build_ipki_world([AgencySpec("PKI1", ("SatB",)), AgencySpec("PKI2", ("SatA",))],
                            0.0, scheme, seed, authorities=["Spc-VA0"])
