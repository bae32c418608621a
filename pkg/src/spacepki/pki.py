"""Certificates, revocation lists, policy mapping tables and signature schemes.

The byte encoding is a simple tag-length-value format, not DER. It is
deterministic and injective, which is all signing and validation need.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from .geometry import CircularOrbit, EciPosition, distance_km

YEAR_S = 365.25 * 86400.0
DEFAULT_CERT_LIFETIME_S = 2 * YEAR_S
DEFAULT_CRL_INTERVAL_S = 24 * 3600.0
ORBITAL_BINDING_TOLERANCE_KM = 50.0


class PkiError(Exception):
    pass


class EncodingError(PkiError):
    pass


class AuthorityError(PkiError):
    """The issuing party is not allowed to issue the requested certificate."""


class ValidityError(PkiError):
    pass


class NotFoundError(PkiError):
    pass


class AlreadyRevokedError(PkiError):
    pass


# -- signature schemes -------------------------------------------------------


@dataclass(frozen=True)
class KeyPair:
    public_key_id: bytes
    public_key: bytes
    private_key: bytes = field(repr=False)


def key_id(public_key: bytes) -> bytes:
    return hashlib.sha256(public_key).digest()[:16]


class MockScheme:
    """Keyed-digest signatures for fast bulk simulation.

    Not a real signature: the public key embeds the signing secret, so anyone
    holding it can forge. Verification of a mutated message always fails.
    """

    name = "mock"
    prefix = b"mock\x00"

    def keygen(self, seed: bytes) -> KeyPair:
        secret = hashlib.sha256(b"mock-key" + seed).digest()
        public = self.prefix + secret
        return KeyPair(key_id(public), public, secret)

    def sign(self, private_key: bytes, message: bytes) -> bytes:
        return hmac.new(private_key, message, hashlib.sha256).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if not public_key.startswith(self.prefix):
            return False
        expected = hmac.new(public_key[len(self.prefix):], message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


class Ed25519Scheme:
    name = "ed25519"
    prefix = b"ed25519\x00"

    def keygen(self, seed: bytes) -> KeyPair:
        sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(b"ed25519-key" + seed).digest())
        raw_sk = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        public = self.prefix + sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(key_id(public), public, raw_sk)

    def sign(self, private_key: bytes, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if not public_key.startswith(self.prefix):
            return False
        try:
            pk = Ed25519PublicKey.from_public_bytes(public_key[len(self.prefix):])
            pk.verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


MOCK = MockScheme()
ED25519 = Ed25519Scheme()
SCHEMES = {MOCK.name: MOCK, ED25519.name: ED25519}


def scheme_for_key(public_key: bytes):
    for scheme in SCHEMES.values():
        if public_key.startswith(scheme.prefix):
            return scheme
    return None


def verify_bytes(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Verify with whichever scheme the public key belongs to."""
    scheme = scheme_for_key(public_key)
    return scheme is not None and scheme.verify(public_key, message, signature)


def sign_bytes(keypair: KeyPair, message: bytes) -> bytes:
    scheme = scheme_for_key(keypair.public_key)
    if scheme is None:
        raise PkiError("unknown key scheme")
    return scheme.sign(keypair.private_key, message)


# -- tag-length-value encoding ----------------------------------------------


class _Writer:
    def __init__(self, kind: bytes):
        self.buf = bytearray(kind)

    def raw(self, tag: int, value: bytes):
        self.buf += struct.pack(">BI", tag, len(value)) + value
        return self

    def int(self, tag, v: int):
        return self.raw(tag, struct.pack(">q", v))

    def float(self, tag, v: float):
        return self.raw(tag, struct.pack(">d", v))

    def str(self, tag, v: str):
        return self.raw(tag, v.encode("utf-8"))

    def bool(self, tag, v: bool):
        return self.raw(tag, b"\x01" if v else b"\x00")

    def strs(self, tag, items: Iterable[str]):
        items = list(items)
        inner = bytearray(struct.pack(">I", len(items)))
        for s in items:
            b = s.encode("utf-8")
            inner += struct.pack(">I", len(b)) + b
        return self.raw(tag, bytes(inner))

    def optional(self, tag, payload: Optional[bytes]):
        return self.raw(tag, b"" if payload is None else b"\x01" + payload)


class _Reader:
    def __init__(self, data: bytes, kind: bytes):
        if not data.startswith(kind):
            raise EncodingError(f"expected {kind!r} record")
        self.data = data
        self.pos = len(kind)

    def raw(self, tag: int) -> bytes:
        if self.pos + 5 > len(self.data):
            raise EncodingError("truncated record")
        t, n = struct.unpack_from(">BI", self.data, self.pos)
        if t != tag:
            raise EncodingError(f"expected tag {tag}, found {t}")
        self.pos += 5
        value = self.data[self.pos:self.pos + n]
        if len(value) != n:
            raise EncodingError("truncated field")
        self.pos += n
        return value

    def int(self, tag):
        return struct.unpack(">q", self.raw(tag))[0]

    def float(self, tag):
        return struct.unpack(">d", self.raw(tag))[0]

    def str(self, tag):
        return self.raw(tag).decode("utf-8")

    def bool(self, tag):
        return self.raw(tag) == b"\x01"

    def strs(self, tag):
        v = self.raw(tag)
        (count,) = struct.unpack_from(">I", v, 0)
        pos, out = 4, []
        for _ in range(count):
            (n,) = struct.unpack_from(">I", v, pos)
            pos += 4
            out.append(v[pos:pos + n].decode("utf-8"))
            pos += n
        return out

    def optional(self, tag) -> Optional[bytes]:
        v = self.raw(tag)
        return None if v == b"" else v[1:]

    def done(self):
        if self.pos != len(self.data):
            raise EncodingError("trailing bytes")


def _encode_orbit(o: CircularOrbit) -> bytes:
    return struct.pack(
        ">5d?d",
        o.altitude_km, o.inclination_deg, o.raan_deg, o.phase_deg, o.epoch_s,
        o.period_override_s is not None, o.period_override_s or 0.0,
    )


def _decode_orbit(b: bytes) -> CircularOrbit:
    alt, inc, raan, phase, epoch, has_p, p = struct.unpack(">5d?d", b)
    return CircularOrbit(alt, inc, raan, phase, epoch, p if has_p else None)


# -- trust artifacts ---------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    serial: int
    subject_name: str
    issuer_name: str
    subject_public_key: bytes = field(repr=False)
    not_before_s: float
    not_after_s: float
    is_ca: bool = False
    path_len_constraint: Optional[int] = None
    policy_ids: frozenset = frozenset()
    # None for ordinary certificates; a (possibly empty) tuple of
    # (issuer_domain_policy, subject_domain_policy) marks a cross-certificate.
    policy_mappings: Optional[tuple] = None
    orbital_binding: Optional[CircularOrbit] = None
    signature: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if not self.not_before_s < self.not_after_s:
            raise ValueError("not_before must precede not_after")
        if self.policy_mappings and not self.is_ca:
            raise ValueError("policy mappings require a CA certificate")
        object.__setattr__(self, "policy_ids", frozenset(self.policy_ids))
        if self.policy_mappings is not None:
            object.__setattr__(
                self, "policy_mappings", tuple(tuple(p) for p in self.policy_mappings)
            )

    @property
    def subject_public_key_id(self) -> bytes:
        return key_id(self.subject_public_key)

    @property
    def key(self) -> tuple:
        return (self.issuer_name, self.serial)

    @property
    def is_self_signed(self) -> bool:
        return self.issuer_name == self.subject_name

    @property
    def is_cross_certificate(self) -> bool:
        return self.policy_mappings is not None

    def valid_at(self, t: float) -> bool:
        return self.not_before_s <= t <= self.not_after_s

    def to_dict(self) -> dict:
        return {
            "serial": self.serial,
            "subject_name": self.subject_name,
            "issuer_name": self.issuer_name,
            "subject_public_key": self.subject_public_key.hex(),
            "not_before_s": self.not_before_s,
            "not_after_s": self.not_after_s,
            "is_ca": self.is_ca,
            "path_len_constraint": self.path_len_constraint,
            "policy_ids": sorted(self.policy_ids),
            "policy_mappings": None if self.policy_mappings is None
            else [list(p) for p in self.policy_mappings],
            "orbital_binding": None if self.orbital_binding is None
            else _orbit_to_dict(self.orbital_binding),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        return cls(
            serial=int(d["serial"]),
            subject_name=d["subject_name"],
            issuer_name=d["issuer_name"],
            subject_public_key=bytes.fromhex(d["subject_public_key"]),
            not_before_s=float(d["not_before_s"]),
            not_after_s=float(d["not_after_s"]),
            is_ca=bool(d.get("is_ca", False)),
            path_len_constraint=d.get("path_len_constraint"),
            policy_ids=frozenset(d.get("policy_ids", ())),
            policy_mappings=None if d.get("policy_mappings") is None
            else tuple(tuple(p) for p in d["policy_mappings"]),
            orbital_binding=None if d.get("orbital_binding") is None
            else CircularOrbit(**d["orbital_binding"]),
            signature=bytes.fromhex(d.get("signature", "")),
        )


def _orbit_to_dict(o: CircularOrbit) -> dict:
    return {
        "altitude_km": o.altitude_km, "inclination_deg": o.inclination_deg,
        "raan_deg": o.raan_deg, "phase_deg": o.phase_deg, "epoch_s": o.epoch_s,
        "period_override_s": o.period_override_s,
    }


_CERT_KIND = b"CERT\x01"


def canonical_encode(cert: Certificate) -> bytes:
    """Encoding of the certificate body; the signature is never included."""
    for name in ("serial", "subject_name", "issuer_name", "subject_public_key",
                 "not_before_s", "not_after_s"):
        if getattr(cert, name, None) is None:
            raise EncodingError(f"missing mandatory field {name}")
    w = _Writer(_CERT_KIND)
    w.int(1, cert.serial).str(2, cert.subject_name).str(3, cert.issuer_name)
    w.raw(4, cert.subject_public_key).float(5, cert.not_before_s).float(6, cert.not_after_s)
    w.bool(7, cert.is_ca)
    w.optional(8, None if cert.path_len_constraint is None
               else struct.pack(">q", cert.path_len_constraint))
    w.strs(9, sorted(cert.policy_ids))
    mappings = None
    if cert.policy_mappings is not None:
        mappings = _Writer(b"").strs(1, [a for a, _ in cert.policy_mappings]) \
            .strs(2, [b for _, b in cert.policy_mappings]).buf
    w.optional(10, None if mappings is None else bytes(mappings))
    w.optional(11, None if cert.orbital_binding is None else _encode_orbit(cert.orbital_binding))
    return bytes(w.buf)


def canonical_decode(data: bytes, signature: bytes = b"") -> Certificate:
    r = _Reader(data, _CERT_KIND)
    serial = r.int(1)
    subject = r.str(2)
    issuer = r.str(3)
    pk = r.raw(4)
    nb = r.float(5)
    na = r.float(6)
    is_ca = r.bool(7)
    pl = r.optional(8)
    policies = r.strs(9)
    mraw = r.optional(10)
    mappings = None
    if mraw is not None:
        mr = _Reader(mraw, b"")
        mappings = tuple(zip(mr.strs(1), mr.strs(2)))
        mr.done()
    oraw = r.optional(11)
    r.done()
    return Certificate(
        serial=serial, subject_name=subject, issuer_name=issuer, subject_public_key=pk,
        not_before_s=nb, not_after_s=na, is_ca=is_ca,
        path_len_constraint=None if pl is None else struct.unpack(">q", pl)[0],
        policy_ids=frozenset(policies), policy_mappings=mappings,
        orbital_binding=None if oraw is None else _decode_orbit(oraw),
        signature=signature,
    )


def verify_signature(cert: Certificate, issuer_public_key: bytes) -> bool:
    return verify_bytes(issuer_public_key, canonical_encode(cert), cert.signature)


@dataclass(frozen=True)
class RevocationEntry:
    serial: int
    revocation_time_s: float
    reason: str = "unspecified"


@dataclass(frozen=True)
class RevocationList:
    issuer_name: str
    this_update_s: float
    next_update_s: float
    entries: tuple = ()
    signature: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        if self.this_update_s > self.next_update_s:
            raise ValueError("this_update must not follow next_update")
        entries = tuple(sorted(self.entries, key=lambda e: e.serial))
        serials = [e.serial for e in entries]
        if len(set(serials)) != len(serials):
            raise ValueError("duplicate serial in revocation list")
        object.__setattr__(self, "entries", entries)

    @property
    def serials(self) -> frozenset:
        return frozenset(e.serial for e in self.entries)

    def entry(self, serial: int) -> Optional[RevocationEntry]:
        for e in self.entries:
            if e.serial == serial:
                return e
        return None

    def encode(self) -> bytes:
        w = _Writer(b"CRL\x01")
        w.str(1, self.issuer_name).float(2, self.this_update_s).float(3, self.next_update_s)
        inner = bytearray(struct.pack(">I", len(self.entries)))
        for e in self.entries:
            reason = e.reason.encode("utf-8")
            inner += struct.pack(">qdI", e.serial, e.revocation_time_s, len(reason)) + reason
        w.raw(4, bytes(inner))
        return bytes(w.buf)

    def verify(self, issuer_public_key: bytes) -> bool:
        return verify_bytes(issuer_public_key, self.encode(), self.signature)

    def to_dict(self) -> dict:
        return {
            "issuer_name": self.issuer_name,
            "this_update_s": self.this_update_s,
            "next_update_s": self.next_update_s,
            "entries": [
                {"serial": e.serial, "revocation_time_s": e.revocation_time_s, "reason": e.reason}
                for e in self.entries
            ],
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RevocationList":
        return cls(
            issuer_name=d["issuer_name"],
            this_update_s=float(d["this_update_s"]),
            next_update_s=float(d["next_update_s"]),
            entries=tuple(RevocationEntry(int(e["serial"]), float(e["revocation_time_s"]),
                                          e.get("reason", "unspecified")) for e in d["entries"]),
            signature=bytes.fromhex(d.get("signature", "")),
        )


@dataclass(frozen=True)
class PolicyMappingTable:
    """Source-domain policy id -> relying-party-domain policy id."""

    entries: tuple  # sorted (source, target) pairs
    version: int
    publisher: str
    signature: bytes = field(default=b"", repr=False)

    def __post_init__(self):
        items = dict(self.entries) if not isinstance(self.entries, dict) else self.entries
        object.__setattr__(self, "entries", tuple(sorted(items.items())))

    @property
    def mapping(self) -> dict:
        return dict(self.entries)

    def encode(self) -> bytes:
        w = _Writer(b"PMT\x01")
        w.int(1, self.version).str(2, self.publisher)
        w.strs(3, [a for a, _ in self.entries]).strs(4, [b for _, b in self.entries])
        return bytes(w.buf)

    def verify(self, publisher_public_key: bytes) -> bool:
        return verify_bytes(publisher_public_key, self.encode(), self.signature)

    def to_dict(self) -> dict:
        return {
            "entries": {a: b for a, b in self.entries},
            "version": self.version,
            "publisher": self.publisher,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyMappingTable":
        return cls(dict(d["entries"]), int(d["version"]), d["publisher"],
                   bytes.fromhex(d.get("signature", "")))


def sign_mapping_table(keypair: KeyPair, entries: dict, version: int, publisher: str) -> PolicyMappingTable:
    unsigned = PolicyMappingTable(entries, version, publisher)
    return replace(unsigned, signature=sign_bytes(keypair, unsigned.encode()))


def check_orbital_binding(cert: Certificate, observed: EciPosition, t: float,
                          tolerance_km: float = ORBITAL_BINDING_TOLERANCE_KM) -> Optional[bool]:
    """Compare an observed position against the certificate's orbit; None if unbound."""
    if cert.orbital_binding is None:
        return None
    return distance_km(cert.orbital_binding.position(t), observed) <= tolerance_km


# -- certification authorities -------------------------------------------------


@dataclass
class CertRequest:
    subject_name: str
    public_key: bytes
    policy_ids: frozenset = frozenset()
    is_ca: bool = False
    path_len_constraint: Optional[int] = None
    not_before_s: Optional[float] = None
    not_after_s: Optional[float] = None
    policy_mappings: Optional[tuple] = None
    orbital_binding: Optional[CircularOrbit] = None


@dataclass
class CaState:
    """Mutable issuer state, owned by a single actor."""

    name: str
    keypair: KeyPair
    certificate: Optional[Certificate] = None
    next_serial: int = 1
    issued: dict = field(default_factory=dict)
    crl: Optional[RevocationList] = None
    crl_interval_s: float = DEFAULT_CRL_INTERVAL_S

    @property
    def is_ca(self) -> bool:
        return self.certificate is not None and self.certificate.is_ca

    @property
    def public_key(self) -> bytes:
        return self.keypair.public_key


def sign_certificate(cert: Certificate, keypair: KeyPair) -> Certificate:
    return replace(cert, signature=sign_bytes(keypair, canonical_encode(cert)))


def create_root_ca(name: str, keypair: KeyPair, now_s: float = 0.0,
                   lifetime_s: float = DEFAULT_CERT_LIFETIME_S,
                   policy_ids: Iterable[str] = (), path_len_constraint: Optional[int] = None) -> CaState:
    """Bootstrap a self-signed root and its (empty) first CRL."""
    ca = CaState(name, keypair)
    cert = Certificate(
        serial=ca.next_serial, subject_name=name, issuer_name=name,
        subject_public_key=keypair.public_key, not_before_s=now_s,
        not_after_s=now_s + lifetime_s, is_ca=True,
        path_len_constraint=path_len_constraint, policy_ids=frozenset(policy_ids),
    )
    ca.certificate = sign_certificate(cert, keypair)
    ca.issued[ca.certificate.serial] = ca.certificate
    ca.next_serial += 1
    publish_crl(ca, now_s)
    return ca


def issue_certificate(issuer: CaState, request: CertRequest, now_s: float) -> Certificate:
    if not issuer.is_ca:
        raise AuthorityError(f"{issuer.name} is not a certification authority")
    own = issuer.certificate
    explicit = request.not_after_s is not None
    not_before = now_s if request.not_before_s is None else request.not_before_s
    not_after = request.not_after_s if explicit else now_s + DEFAULT_CERT_LIFETIME_S
    if not explicit:
        not_after = min(not_after, own.not_after_s)
    if not_before < own.not_before_s or not_after > own.not_after_s:
        raise ValidityError(
            f"requested validity [{not_before}, {not_after}] outside issuer window "
            f"[{own.not_before_s}, {own.not_after_s}]"
        )
    if not not_before < not_after:
        raise ValidityError("empty validity window")
    cert = Certificate(
        serial=issuer.next_serial,
        subject_name=request.subject_name,
        issuer_name=issuer.name,
        subject_public_key=request.public_key,
        not_before_s=not_before,
        not_after_s=not_after,
        is_ca=request.is_ca,
        path_len_constraint=request.path_len_constraint,
        policy_ids=frozenset(request.policy_ids),
        policy_mappings=request.policy_mappings,
        orbital_binding=request.orbital_binding,
    )
    cert = sign_certificate(cert, issuer.keypair)
    issuer.issued[cert.serial] = cert
    issuer.next_serial += 1
    return cert


def publish_crl(issuer: CaState, now_s: float, entries: Optional[tuple] = None) -> RevocationList:
    if entries is None:
        entries = issuer.crl.entries if issuer.crl is not None else ()
    unsigned = RevocationList(issuer.name, now_s, now_s + issuer.crl_interval_s, entries)
    issuer.crl = replace(unsigned, signature=sign_bytes(issuer.keypair, unsigned.encode()))
    return issuer.crl


def refresh_crl(issuer: CaState, now_s: float) -> Optional[RevocationList]:
    """Re-sign the current CRL when its next_update has been reached."""
    if issuer.crl is None or now_s >= issuer.crl.next_update_s:
        return publish_crl(issuer, now_s)
    return None


def revoke_certificate(issuer: CaState, serial: int, reason: str, now_s: float) -> RevocationList:
    if serial not in issuer.issued:
        raise NotFoundError(f"{issuer.name} never issued serial {serial}")
    current = issuer.crl.entries if issuer.crl is not None else ()
    if any(e.serial == serial for e in current):
        raise AlreadyRevokedError(f"serial {serial} already revoked by {issuer.name}")
    return publish_crl(issuer, now_s, current + (RevocationEntry(serial, now_s, reason),))


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)
