"""Single-phase equivalent of the IEEE 37-node test feeder with DGs and ties.

Topology, segment lengths, conductor configurations and spot loads follow the
public IEEE 37-node data set; three-phase spot loads are summed per bus and
configuration impedances are approximate positive-sequence values. Modelling
choices that the public data does not fix (switch and tie placement, tie
impedances, DG buses, flow limits) are listed in ``ASSUMPTIONS``.
"""
from __future__ import annotations

from .feeder import Bus, Edge, Feeder

ASSUMPTIONS = (
    "substation 799 is the root; the 799-701 regulator is ideal and absorbs the segment impedance",
    "tie switches 712-713 (600 ft, cfg 724) and 733-737 (800 ft, cfg 723), normally open",
    "existing remotely controlled switches on 702-713, 702-703 and 734-737, normally closed",
    "each solar DG sits on its own bus joined to the host load bus by a zero-impedance line",
    "line and substation flow limits are +/-3000 kW and +/-3000 kVAr",
    "black-start DG reactive range is +/-0.484 x rating (0.9 power factor)",
)

# approximate positive-sequence impedance, ohm/mile
CONFIG_Z = {
    721: (0.2323, 0.2330),
    722: (0.3378, 0.3418),
    723: (0.8058, 0.4643),
    724: (1.5617, 0.5003),
}

# (from, to, length ft, config)
SEGMENTS = (
    ("701", "702", 960, 722),
    ("702", "705", 400, 724),
    ("702", "713", 360, 723),
    ("702", "703", 1320, 722),
    ("703", "727", 240, 724),
    ("703", "730", 600, 723),
    ("704", "714", 80, 724),
    ("704", "720", 800, 723),
    ("705", "742", 320, 724),
    ("705", "712", 240, 724),
    ("706", "725", 280, 724),
    ("707", "724", 760, 724),
    ("707", "722", 120, 724),
    ("708", "733", 320, 723),
    ("708", "732", 320, 724),
    ("709", "731", 600, 723),
    ("709", "708", 320, 723),
    ("710", "735", 200, 724),
    ("710", "736", 1280, 724),
    ("711", "741", 400, 723),
    ("711", "740", 200, 724),
    ("713", "704", 520, 723),
    ("714", "718", 520, 724),
    ("720", "707", 920, 724),
    ("720", "706", 600, 723),
    ("727", "744", 280, 723),
    ("730", "709", 200, 723),
    ("733", "734", 560, 723),
    ("734", "737", 640, 723),
    ("734", "710", 520, 724),
    ("737", "738", 400, 723),
    ("738", "711", 400, 723),
    ("744", "728", 200, 724),
    ("744", "729", 280, 724),
)
TIES = (("712", "713", 600, 724), ("733", "737", 800, 723))
SWITCHED_SEGMENTS = {("702", "713"), ("702", "703"), ("734", "737")}

# XFM-1, 500 kVA, 4.8/0.48 kV: R = 0.09 %, X = 1.81 % on its own rating
XFM_709_775 = (0.0009, 0.0181, 500.0)

# summed three-phase spot loads (kW, kVAr)
SPOT_LOADS = {
    "701": (630, 315), "712": (85, 40), "713": (85, 40), "714": (38, 18),
    "718": (85, 40), "720": (85, 40), "722": (161, 80), "724": (42, 21),
    "725": (42, 21), "727": (42, 21), "728": (126, 63), "729": (42, 21),
    "730": (85, 40), "731": (85, 40), "732": (42, 21), "733": (85, 40),
    "734": (42, 21), "735": (85, 40), "736": (42, 21), "737": (140, 70),
    "738": (126, 62), "740": (85, 40), "741": (42, 21), "742": (93, 44),
    "744": (42, 21),
}
ELASTIC = {"701", "722", "737", "738"}
BLACK_START = {"705": 459.3, "710": 918.5}
SOLAR_HOSTS = ("718", "730", "738")

BASE_KVA = 1000.0
BASE_KV = 4.8
V0 = 1.0
V_MIN, V_MAX = 0.97 ** 2, 1.03 ** 2
FLOW_LIMIT = 3000.0
BS_Q_FACTOR = 0.484


def _bus_names() -> list[str]:
    names = {a for a, _, _, _ in SEGMENTS} | {b for _, b, _, _ in SEGMENTS}
    names |= {"701", "775"}
    return sorted(names)


def build_ieee37() -> Feeder:
    z_base = BASE_KV ** 2 * 1000.0 / BASE_KVA
    names = ["799"] + _bus_names() + [f"{h}pv" for h in SOLAR_HOSTS]
    index = {n: i for i, n in enumerate(names)}

    buses = []
    for i, name in enumerate(names):
        common = dict(id=i, name=name, v_min=V_MIN, v_max=V_MAX)
        if name == "799":
            buses.append(Bus(kind="root", p_min=-FLOW_LIMIT, p_max=FLOW_LIMIT,
                             q_min=-FLOW_LIMIT, q_max=FLOW_LIMIT,
                             id=i, name=name, v_min=V0, v_max=V0))
        elif name in BLACK_START:
            rating = BLACK_START[name]
            buses.append(Bus(kind="gen_black_start", p_min=0.0, p_max=rating,
                             q_min=-BS_Q_FACTOR * rating, q_max=BS_Q_FACTOR * rating,
                             rating=rating, **common))
        elif name.endswith("pv"):
            cap = SPOT_LOADS[name[:-2]][0] / 2.0
            buses.append(Bus(kind="gen_non_black_start", p_min=0.0, p_max=cap,
                             rating=cap, **common))
        elif name in SPOT_LOADS:
            p, q = SPOT_LOADS[name]
            if name in ELASTIC:
                buses.append(Bus(kind="load_elastic", p_min=-p, p_max=-p / 2,
                                 q_min=-q, q_max=-q / 2, **common))
            else:
                buses.append(Bus(kind="load_fixed", p_min=-p, p_max=-p,
                                 q_min=-q, q_max=-q, **common))
        else:
            buses.append(Bus(kind="junction", **common))

    limits = dict(P_min=-FLOW_LIMIT, P_max=FLOW_LIMIT, Q_min=-FLOW_LIMIT, Q_max=FLOW_LIMIT)
    edges = []

    def add(a, b, kind, r=0.0, x=0.0, **kw):
        edges.append(Edge(id=len(edges), from_bus=index[a], to_bus=index[b], kind=kind,
                          r=r, x=x, name=f"{a}-{b}", **limits, **kw))

    add("799", "701", "regulator")
    for a, b, ft, cfg in SEGMENTS:
        ohm_r, ohm_x = CONFIG_Z[cfg]
        miles = ft / 5280.0
        kind = "switch" if (a, b) in SWITCHED_SEGMENTS else "in_service"
        add(a, b, kind, ohm_r * miles / z_base, ohm_x * miles / z_base)
    r_t, x_t, s_t = XFM_709_775
    add("709", "775", "in_service", r_t * BASE_KVA / s_t, x_t * BASE_KVA / s_t)
    for a, b, ft, cfg in TIES:
        ohm_r, ohm_x = CONFIG_Z[cfg]
        miles = ft / 5280.0
        add(a, b, "switch", ohm_r * miles / z_base, ohm_x * miles / z_base,
            normally_closed=False)
    for host in SOLAR_HOSTS:
        add(host, f"{host}pv", "in_service", outage_eligible=False)

    return Feeder(buses=tuple(buses), edges=tuple(edges), v0=V0, lam=1e-3,
                  base_kva=BASE_KVA, base_kv=BASE_KV, name="ieee37-modified")


def builtin_ieee37() -> Feeder:
    """The packaged feeder file, parsed through the regular loader."""
    from importlib.resources import files

    from .feeder import load_feeder

    return load_feeder(files("dsrmilp").joinpath("data/ieee37.json").read_text())
