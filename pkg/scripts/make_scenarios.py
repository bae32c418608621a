"""Regenerate the bundled scenario files under scenarios/.

Aligned geometries put every satellite at phase 0 on the equator at t=0, so
the relevant nodes sit on one radial line over longitude 0.
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"

TRUST = {"agencies": [{"name": "PKI1", "members": ["SatB"]},
                      {"name": "PKI2", "members": ["SatA"]}]}
BCA = {"id": "GRD_BCA:0", "site": {"lat_deg": 0.0, "lon_deg": 0.0}}
NO_RP_CACHE = {"rp_response_cache_ttl_s": 0.0}


def orbit(alt, phase=0.0, inc=0.0, raan=0.0):
    return {"orbit": {"altitude_km": alt, "inclination_deg": inc, "raan_deg": raan, "phase_deg": phase}}


def geo(lon):
    return {"orbit": {"geostationary_lon_deg": lon}}


def site(lat, lon):
    return {"site": {"lat_deg": lat, "lon_deg": lon}}


def rp(alt, entity="SatB", index=0, **kw):
    return {"id": f"SPC_RP:{index}", "entity": entity, **orbit(alt, **kw)}


def requests(n, spacing=1.0, requester="SatB", target="SatA", start=0.0):
    return [{"t_s": start + k * spacing, "requester": requester, "target": target} for k in range(n)]


def scenario(name, scheme, nodes, description, workload=None, duration=60.0, options=None,
             trust=TRUST, revocations=None):
    d = {
        "schema_version": "1.0",
        "name": name,
        "description": description,
        "scheme": scheme,
        "seed": 7,
        "duration_s": duration,
        "nodes": nodes,
        "trust": trust,
        "workload": workload if workload is not None else {"requests": requests(10)},
        "options": dict(NO_RP_CACHE, **(options or {})),
    }
    if revocations:
        d["revocations"] = revocations
    return d


def build():
    va = {"id": "SPC_VA:0", **orbit(10_000)}
    repos = [{"id": f"REPOSITORY:{i}", **geo(lon)} for i, lon in enumerate((0.0, 120.0, -120.0))]
    relay = {"id": "RELAY:0", **geo(0.0)}
    station = {"id": "GROUND_STATION:0", **site(45.0, 0.0)}
    spc_ca = {"id": "SPC_CA:0", **orbit(10_000)}

    out = {
        "ipki_case1": scenario(
            "ipki_case1", "IPKI_CASE1", [rp(1_000), va, BCA],
            "LEO requester at 1,000 km directly below an MEO validator at 10,000 km"),
        "ipki_case1_meo": scenario(
            "ipki_case1_meo", "IPKI_CASE1", [rp(5_000), va, BCA],
            "MEO requester at 5,000 km directly below an MEO validator at 10,000 km"),
        "ipki_case2": scenario(
            "ipki_case2", "IPKI_CASE2", [rp(1_000), va, *repos, BCA],
            "LEO requester, MEO validator, three GEO repository replicas 120 degrees apart"),
        "ipki_case2_meo": scenario(
            "ipki_case2_meo", "IPKI_CASE2", [rp(5_000), va, *repos, BCA],
            "MEO requester at 5,000 km, MEO validator, GEO repository replicas"),
        "relay_geo": scenario(
            "relay_geo", "RELAY_GEO", [rp(1_000), relay, station, BCA],
            "LEO requester under a GEO relay over longitude 0; ground validator at 45N"),
        "relay_geo_queue": scenario(
            "relay_geo_queue", "RELAY_GEO",
            [rp(1_000, entity=f"SatR{k:02d}", index=k) for k in range(25)] + [relay, station, BCA],
            "25 co-located requesters hit a 20-slot relay at the same instant",
            workload={"requests": [{"t_s": 0.0, "requester": f"SatR{k:02d}", "target": "SatA"}
                                   for k in range(25)]},
            trust={"agencies": [{"name": "PKI1", "members": [f"SatR{k:02d}" for k in range(25)]},
                                {"name": "PKI2", "members": ["SatA"]}]}),
        "relay_occluded": scenario(
            "relay_occluded", "RELAY_GEO", [rp(1_000, phase=180.0), relay, station, BCA],
            "LEO requester starts on the far side of the Earth from its GEO relay",
            workload={"requests": requests(1)}, duration=7_200.0),
        "delayed_ground": scenario(
            "delayed_ground", "DELAYED_GROUND",
            [rp(160), {"id": "GROUND_STATION:0", **site(0.0, 0.0)}, BCA],
            "LEO requester at 160 km passing directly over its ground station",
            workload={"requests": requests(1)}),
        "delayed_ground_2000": scenario(
            "delayed_ground_2000", "DELAYED_GROUND",
            [rp(2_000), {"id": "GROUND_STATION:0", **site(0.0, 0.0)}, BCA],
            "LEO requester at 2,000 km passing directly over its ground station",
            workload={"requests": requests(1)}),
        "spcpki_local": scenario(
            "spcpki_local", "SPCPKI_LOCAL", [rp(1_000), spc_ca],
            "Requester validates against its own cached SpcPKI material"),
        "spcpki_delegated": scenario(
            "spcpki_delegated", "SPCPKI_DELEGATED", [rp(1_000), spc_ca],
            "Requester asks the in-space CA directly above it"),
        "comparison": scenario(
            "comparison", "IPKI_CASE1", [rp(1_000), va, *repos, relay, station, spc_ca, BCA],
            "Aligned geometry carrying every node any scheme needs"),
        "revisit": scenario(
            "revisit", "DELAYED_GROUND", [rp(500, inc=53.0), station, BCA],
            "Inclined LEO at 500 km served by a single ground station at 45N for a week",
            workload={"generator": {"rate_per_s": 1 / 3600.0}}, duration=7 * 86_400.0),
        "coverage": scenario(
            "coverage", "DELAYED_GROUND",
            [rp(500), relay, {"id": "GROUND_STATION:0", **site(0.0, 0.0)},
             {"id": "GROUND_STATION:1", **site(45.0, 0.0)},
             {"id": "GROUND_STATION:2", **site(90.0, 0.0)}, BCA],
            "Equatorial LEO, a GEO relay and stations at the equator, 45N and the pole",
            workload={"requests": requests(1)}, duration=86_400.0),
        "ipki_constellation": scenario(
            "ipki_constellation", "IPKI_CASE1",
            [rp(1_000, inc=53.0)]
            + [{"id": f"SPC_VA:{k}", **orbit(10_000, phase=k * 360.0 / 13)} for k in range(13)]
            + [BCA],
            "Inclined LEO requester served by a ring of 13 MEO validators",
            workload={"generator": {"rate_per_s": 1 / 60.0}}, duration=6 * 3600.0),
        "bridge_revocation": scenario(
            "bridge_revocation", "IPKI_CASE1", [rp(1_000), va, BCA],
            "The target's intermediate CA is revoked mid-run; requests flip to REVOKED after sync",
            workload={"requests": requests(20, spacing=60.0)}, duration=1_800.0,
            revocations=[{"t_s": 600.0, "subject": "PKI2-CA1", "reason": "keyCompromise"}]),
    }
    return out


def main():
    OUT.mkdir(exist_ok=True)
    for name, d in build().items():
        (OUT / f"{name}.json").write_text(json.dumps(d, indent=2) + "\n")
        print(f"wrote scenarios/{name}.json")


if __name__ == "__main__":
    main()
