from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spacepki.geometry import CircularOrbit
from spacepki.pki import (
    DEFAULT_CERT_LIFETIME_S,
    ED25519,
    MOCK,
    AlreadyRevokedError,
    AuthorityError,
    Certificate,
    CertRequest,
    EncodingError,
    NotFoundError,
    PkiError,
    PolicyMappingTable,
    RevocationEntry,
    RevocationList,
    ValidityError,
    canonical_decode,
    canonical_encode,
    check_orbital_binding,
    create_root_ca,
    issue_certificate,
    key_id,
    refresh_crl,
    revoke_certificate,
    scheme_for_key,
    sign_bytes,
    sign_mapping_table,
    verify_signature,
)


@pytest.fixture(params=[MOCK, ED25519], ids=["mock", "ed25519"])
def scheme(request):
    return request.param


def test_keygen_is_deterministic_and_id_is_digest(scheme):
    a, b = scheme.keygen(b"seed"), scheme.keygen(b"seed")
    assert a == b
    assert a.public_key_id == key_id(a.public_key)
    assert scheme.keygen(b"other").public_key != a.public_key


def test_sign_verify_and_bit_flips(scheme):
    kp = scheme.keygen(b"k")
    msg = b"validate SatA please"
    sig = scheme.sign(kp.private_key, msg)
    assert scheme.verify(kp.public_key, msg, sig)
    for i in range(len(msg) * 8):
        mutated = bytearray(msg)
        mutated[i // 8] ^= 1 << (i % 8)
        assert not scheme.verify(kp.public_key, bytes(mutated), sig)
    assert not scheme.verify(scheme.keygen(b"x").public_key, msg, sig)


def test_schemes_do_not_cross_verify():
    m, e = MOCK.keygen(b"k"), ED25519.keygen(b"k")
    assert not ED25519.verify(m.public_key, b"m", MOCK.sign(m.private_key, b"m"))
    assert not MOCK.verify(e.public_key, b"m", ED25519.sign(e.private_key, b"m"))
    assert scheme_for_key(m.public_key) is MOCK
    assert scheme_for_key(e.public_key) is ED25519
    assert scheme_for_key(b"rsa\x00abc") is None


def test_sign_bytes_unknown_key_type():
    bad = replace(MOCK.keygen(b"k"), public_key=b"zzz")
    with pytest.raises(PkiError):
        sign_bytes(bad, b"m")


def _root(name="Grd-CA", scheme=MOCK, now=0.0, **kw):
    return create_root_ca(name, scheme.keygen(name.encode()), now, **kw)


def test_root_is_self_signed(scheme):
    root = _root(scheme=scheme)
    c = root.certificate
    assert c.is_self_signed and c.is_ca
    assert verify_signature(c, root.public_key)
    assert root.crl is not None and root.crl.verify(root.public_key)


def test_issue_cert_id_verifies_under_issuer(scheme):
    root = _root(scheme=scheme)
    sat = scheme.keygen(b"SatA")
    cert = issue_certificate(root, CertRequest("SatA", sat.public_key, {"spcpki:medium"}), 10.0)
    assert cert.issuer_name == "Grd-CA" and cert.subject_name == "SatA"
    assert verify_signature(cert, root.public_key)
    assert not verify_signature(cert, sat.public_key)
    assert cert.subject_public_key_id == sat.public_key_id


def test_default_lifetime_two_years_clipped_to_issuer():
    root = _root(lifetime_s=10 * DEFAULT_CERT_LIFETIME_S)
    c = issue_certificate(root, CertRequest("SatA", MOCK.keygen(b"a").public_key), 100.0)
    assert c.not_after_s - c.not_before_s == DEFAULT_CERT_LIFETIME_S
    short = _root("Short", lifetime_s=1000.0)
    c2 = issue_certificate(short, CertRequest("SatB", MOCK.keygen(b"b").public_key), 100.0)
    assert c2.not_after_s == short.certificate.not_after_s


def test_serials_unique_per_issuer():
    root = _root()
    serials = [issue_certificate(root, CertRequest(f"S{i}", MOCK.keygen(bytes([i])).public_key), 0.0).serial
               for i in range(50)]
    assert len(set(serials)) == 50
    assert root.certificate.serial not in serials


def test_validity_beyond_issuer_rejected():
    root = _root(lifetime_s=1000.0)
    req = CertRequest("SatA", MOCK.keygen(b"a").public_key, not_after_s=5000.0)
    with pytest.raises(ValidityError):
        issue_certificate(root, req, 0.0)
    with pytest.raises(ValidityError):
        issue_certificate(root, CertRequest("SatA", b"mock\x00k", not_before_s=-5.0, not_after_s=10.0), 0.0)


def test_non_ca_cannot_issue():
    root = _root()
    kp = MOCK.keygen(b"leaf")
    leaf = issue_certificate(root, CertRequest("Leaf", kp.public_key), 0.0)
    from spacepki.pki import CaState
    with pytest.raises(AuthorityError):
        issue_certificate(CaState("Leaf", kp, leaf), CertRequest("X", kp.public_key), 0.0)


def test_certificate_invariants():
    with pytest.raises(ValueError):
        Certificate(1, "a", "b", b"k", 10.0, 10.0)
    with pytest.raises(ValueError):
        Certificate(1, "a", "b", b"k", 0.0, 10.0, is_ca=False, policy_mappings=(("x", "y"),))


def test_encode_deterministic_and_serial_sensitive():
    root = _root()
    c = issue_certificate(root, CertRequest("SatA", MOCK.keygen(b"a").public_key), 0.0)
    assert canonical_encode(c) == canonical_encode(c)
    assert canonical_encode(c) != canonical_encode(replace(c, serial=c.serial + 1))
    # the signature is not part of the signed body
    assert canonical_encode(c) == canonical_encode(replace(c, signature=b""))


def test_decode_rejects_garbage_and_trailing_bytes():
    root = _root()
    data = canonical_encode(root.certificate)
    with pytest.raises(EncodingError):
        canonical_decode(b"nonsense")
    with pytest.raises(EncodingError):
        canonical_decode(data + b"\x00")
    with pytest.raises(EncodingError):
        canonical_decode(data[:-3])


names = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FF), min_size=1, max_size=12)
policy_sets = st.frozensets(st.sampled_from(["a:low", "a:medium", "b:medium", "bridge:medium", "é:ü"]),
                            max_size=3)


@st.composite
def certificates(draw):
    nb = draw(st.floats(-1e9, 1e9, allow_nan=False))
    span = draw(st.floats(1e-3, 1e9, allow_nan=False))
    is_ca = draw(st.booleans())
    mappings = None
    if is_ca and draw(st.booleans()):
        mappings = tuple(draw(st.lists(st.tuples(names, names), max_size=3)))
    orbit = None
    if draw(st.booleans()):
        orbit = CircularOrbit(draw(st.floats(160.0, 40_000.0)), draw(st.floats(0.0, 180.0)),
                              draw(st.floats(0.0, 359.0)), draw(st.floats(0.0, 359.0)))
    return Certificate(
        serial=draw(st.integers(0, 2 ** 62)),
        subject_name=draw(names),
        issuer_name=draw(names),
        subject_public_key=draw(st.binary(min_size=1, max_size=48)),
        not_before_s=nb,
        not_after_s=nb + span,
        is_ca=is_ca,
        path_len_constraint=draw(st.one_of(st.none(), st.integers(0, 10))),
        policy_ids=draw(policy_sets),
        policy_mappings=mappings,
        orbital_binding=orbit,
        signature=draw(st.binary(max_size=64)),
    )


@settings(max_examples=1000, deadline=None)
@given(certificates())
def test_round_trip_decode_encode(cert):
    assert canonical_decode(canonical_encode(cert), cert.signature) == cert
    assert Certificate.from_dict(cert.to_dict()) == cert


@settings(max_examples=300, deadline=None)
@given(certificates(), certificates())
def test_encoding_injective(a, b):
    if replace(a, signature=b"") != replace(b, signature=b""):
        assert canonical_encode(a) != canonical_encode(b)


@settings(max_examples=100, deadline=None)
@given(names, st.data())
def test_mutated_subject_byte_breaks_signature(subject, data):
    root = _root()
    cert = issue_certificate(root, CertRequest(subject, MOCK.keygen(b"s").public_key), 0.0)
    raw = bytearray(cert.subject_name.encode("utf-8"))
    i = data.draw(st.integers(0, len(raw) - 1))
    raw[i] ^= data.draw(st.integers(1, 127))
    try:
        mutated = raw.decode("utf-8")
    except UnicodeDecodeError:
        return
    assert not verify_signature(replace(cert, subject_name=mutated), root.public_key)


def test_revoke_and_membership():
    root = _root()
    certs = [issue_certificate(root, CertRequest(f"S{i}", MOCK.keygen(bytes([i])).public_key), 0.0)
             for i in range(8)]
    crl = revoke_certificate(root, certs[6].serial, "keyCompromise", 42.0)
    e = crl.entry(certs[6].serial)
    assert e.revocation_time_s == 42.0 and e.reason == "keyCompromise"
    assert crl.this_update_s == 42.0 and crl.verify(root.public_key)


def test_double_revocation_leaves_list_unchanged():
    root = _root()
    c = issue_certificate(root, CertRequest("S", MOCK.keygen(b"s").public_key), 0.0)
    crl = revoke_certificate(root, c.serial, "superseded", 5.0)
    with pytest.raises(AlreadyRevokedError):
        revoke_certificate(root, c.serial, "superseded", 6.0)
    assert root.crl == crl
    with pytest.raises(NotFoundError):
        revoke_certificate(root, 999, "x", 7.0)


def test_crl_append_only_against_set_oracle():
    root = _root()
    certs = [issue_certificate(root, CertRequest(f"S{i}", MOCK.keygen(bytes([i])).public_key), 0.0)
             for i in range(10)]
    order = [7, 2, 9, 4]
    oracle = set()
    previous = frozenset()
    for k, i in enumerate(order):
        crl = revoke_certificate(root, certs[i].serial, "unspecified", float(k))
        oracle.add(certs[i].serial)
        assert crl.serials == oracle
        assert previous <= crl.serials
        assert [e.serial for e in crl.entries] == sorted(oracle)
        previous = crl.serials
    assert len(root.crl.entries) == 4


def test_crl_invariants_and_round_trip():
    with pytest.raises(ValueError):
        RevocationList("X", 10.0, 5.0)
    with pytest.raises(ValueError):
        RevocationList("X", 0.0, 5.0, (RevocationEntry(1, 0.0), RevocationEntry(1, 1.0)))
    root = _root()
    c = issue_certificate(root, CertRequest("S", MOCK.keygen(b"s").public_key), 0.0)
    crl = revoke_certificate(root, c.serial, "cessationOfOperation", 3.0)
    again = RevocationList.from_dict(crl.to_dict())
    assert again == crl and again.verify(root.public_key)
    assert not replace(crl, next_update_s=crl.next_update_s + 1).verify(root.public_key)


def test_refresh_only_when_due():
    root = _root()
    first = root.crl
    assert refresh_crl(root, first.next_update_s - 1.0) is None
    fresh = refresh_crl(root, first.next_update_s)
    assert fresh.this_update_s == first.next_update_s
    assert fresh.entries == first.entries


def test_mapping_table_sign_verify_round_trip():
    kp = MOCK.keygen(b"Grd-BCA")
    t = sign_mapping_table(kp, {"PKI2:medium": "bridge:medium", "PKI1:medium": "bridge:medium"}, 3, "Grd-BCA")
    assert t.verify(kp.public_key)
    assert t.mapping == {"PKI1:medium": "bridge:medium", "PKI2:medium": "bridge:medium"}
    assert PolicyMappingTable.from_dict(t.to_dict()) == t
    assert not replace(t, version=4).verify(kp.public_key)
    assert not t.verify(MOCK.keygen(b"other").public_key)


def test_orbital_binding_check():
    orbit = CircularOrbit(1000.0)
    root = _root()
    bound = issue_certificate(root, CertRequest("SatA", MOCK.keygen(b"a").public_key,
                                                orbital_binding=orbit), 0.0)
    assert check_orbital_binding(bound, orbit.position(300.0), 300.0) is True
    far = CircularOrbit(1000.0, phase_deg=10.0).position(300.0)
    assert check_orbital_binding(bound, far, 300.0) is False
    plain = issue_certificate(root, CertRequest("SatB", MOCK.keygen(b"b").public_key), 0.0)
    assert check_orbital_binding(plain, far, 300.0) is None
