"""Regenerate the trust fixtures under fixtures/ for ``spacepki validate``."""

from pathlib import Path

from spacepki.fixtures import fixture_from_ipki_world
from spacepki.pki import CertRequest, issue_certificate
from spacepki.worlds import agency_policy, build_bridge_world

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def main():
    OUT.mkdir(exist_ok=True)
    w = build_bridge_world()
    fixture_from_ipki_world(w, 0.0, "bridge topology; validate SatA against Grd-BCA at t=0").dump(
        OUT / "bridge_valid.json")

    pki1 = w.pcas["PKI1"]
    fixture_from_ipki_world(w, 0.0, "same topology anchored at the relying party's own principal CA",
                            anchors=[pki1.certificate]).dump(OUT / "bridge_pca_anchor.json")

    ca2 = w.intermediates["PKI2"][0]
    kp = w.keys("SatC")
    short = issue_certificate(ca2, CertRequest("SatC", kp.public_key, frozenset([agency_policy("PKI2")]),
                                               not_after_s=3600.0), 0.0)
    fx = fixture_from_ipki_world(w, 0.0, "SatC expires at t=3600; validate at t=7200")
    fx.certificates.append(short)
    fx.dump(OUT / "bridge_expired_target.json")

    w.revoke("PKI2-CA1", "keyCompromise", 100.0)
    fixture_from_ipki_world(w, 100.0, "PKI2-CA1 revoked at t=100; validate SatA at t=200").dump(
        OUT / "bridge_revoked_intermediate.json")
    for p in sorted(OUT.glob("*.json")):
        print(f"wrote fixtures/{p.name}")


if __name__ == "__main__":
    main()
