"""Published reference systems, their reported results and the regeneration drivers."""
from __future__ import annotations

import csv
import io
from itertools import product

from .mapcore import MarkovianArrivalProcess, preset, rescale_mean
from .policies import POLICY_NAMES, compare_policies, theta_grid, theta_sweep
from .qbd import CostParameters

LOAD = 0.8
COSTS = CostParameters(h=1.0, b=5.0)

# table id -> (arrival preset, service preset)
TABLE_SYSTEMS = {
    "3.2": ("t31-pos-lo", "exp"),
    "3.3": ("t31-pos-hi", "exp"),
    "3.4": ("t31-neg-lo", "exp"),
    "3.5": ("t31-neg-hi", "exp"),
    "3.6": ("exp", "t31-pos-lo"),
    "3.7": ("exp", "t31-pos-hi"),
    "3.8": ("exp", "t31-neg-lo"),
    "3.9": ("exp", "t31-neg-hi"),
}

# policy -> (thresholds as printed, TC, dTC %, E[X-], E[X+], P0)
PUBLISHED = {
    "3.2": {"MTWA": ((16, 11, 10), 13.4067, 0, 1.3201, 6.8064, 0.1490),
            "MTNA": ((7, 7, 6), 14.9538, 12, 2.2120, 3.8941, 0.2511),
            "STWA": (11, 13.7295, 2, 1.3981, 6.7392, 0.1577),
            "STNA": (7, 14.9017, 11, 2.2601, 3.6013, 0.2566)},
    "3.3": {"MTWA": ((19, 12), 17.8130, 0, 1.7380, 9.1231, 0.1583),
            "MTNA": ((9, 8), 21.4375, 20, 3.4962, 3.9565, 0.3184),
            "STWA": (16, 18.3744, 3, 1.7677, 9.5361, 0.1610),
            "STNA": (9, 21.4637, 20, 3.4492, 4.2176, 0.3142)},
    "3.4": {"MTWA": ((6, 6, 5), 6.1660, 0, 0.6114, 3.1088, 0.1543),
            "MTNA": ((7, 7, 6), 6.2399, 1, 0.4571, 3.9544, 0.1154),
            "STWA": (6, 6.1775, 0, 0.5692, 3.3316, 0.1437),
            "STNA": (7, 6.3155, 2, 0.4255, 4.1879, 0.1074)},
    "3.5": {"MTWA": ((13, 12, 11), 11.6780, 0, 1.0670, 6.3431, 0.1513),
            "MTNA": ((13, 16, 16), 12.3225, 6, 0.6743, 8.9509, 0.0956),
            "STWA": (11, 11.6845, 0, 1.0762, 6.3034, 0.1526),
            "STNA": (14, 12.3084, 5, 0.6802, 8.9074, 0.0965)},
    "3.6": {"MTWA": ((12, 11, 7), 10.1854, 0, 1.0483, 4.9438, 0.1593),
            "MTNA": ((8, 7, 6), 11.3075, 11, 1.6547, 3.0339, 0.2516),
            "STWA": (9, 10.5654, 4, 1.0761, 5.1849, 0.1630),
            "STNA": (7, 11.0796, 9, 1.4951, 3.6039, 0.2268)},
    "3.7": {"MTWA": ((30, 21), 29.4551, 0, 3.1322, 13.7943, 0.1626),
            "MTNA": ((12, 9), 34.3890, 17, 5.9574, 4.6020, 0.3125),
            "STWA": (22, 29.9031, 2, 3.1155, 14.3256, 0.1617),
            "STNA": (9, 35.6392, 21, 6.2382, 4.4482, 0.3269)},
    "3.8": {"MTWA": ((7, 6, 5), 6.2734, 0, 0.6233, 3.1572, 0.1537),
            "MTNA": ((7, 7, 6), 6.2925, 0, 0.5525, 3.5302, 0.1362),
            "STWA": (6, 6.3932, 2, 0.6230, 3.2780, 0.1536),
            "STNA": (7, 6.4719, 3, 0.4695, 4.1245, 0.1157)},
    "3.9": {"MTWA": ((12, 11, 9), 11.1589, 0, 1.0147, 6.0855, 0.1461),
            "MTNA": ((13, 12, 12), 11.6535, 4, 0.7389, 7.9593, 0.1064),
            "STWA": (11, 11.4695, 3, 1.0019, 6.4602, 0.1442),
            "STNA": (13, 11.8632, 6, 0.7341, 8.1925, 0.1057)},
}

# figure id -> (which process carries the correlation, benchmark compared to MTWA)
FIGURES = {
    "fig3.3": ("arrival", "pos", "STWA"),
    "fig3.4": ("arrival", "neg", "STWA"),
    "fig3.5": ("service", "pos", "STWA"),
    "fig3.6": ("service", "neg", "STWA"),
    "fig3.7": ("both", None, "MTNA"),
    "fig3.8": ("both", None, "STWA"),
    "fig3.9": ("both", None, "STNA"),
}

REPRO_IDS = tuple(PUBLISHED) + tuple(FIGURES)


def load_system(arrival: MarkovianArrivalProcess, service: MarkovianArrivalProcess,
                rho: float = LOAD):
    """Service rescaled to mean 1, arrivals to mean ``1 / rho``.

    Costs and inventory levels are invariant under a common change of time
    unit, so only the ratio of the two means matters.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"traffic intensity must lie in (0, 1), got {rho}")
    return rescale_mean(arrival, 1.0 / rho), rescale_mean(service, 1.0)


def table_system(table_id: str, rho: float = LOAD):
    a, s = TABLE_SYSTEMS[table_id]
    return load_system(preset(a), preset(s), rho)


def reproduce_table(table_id: str, costs: CostParameters = COSTS) -> list[dict]:
    if table_id not in PUBLISHED:
        raise KeyError(f"unknown table {table_id!r}")
    arrival, service = table_system(table_id)
    rows = []
    for r in compare_policies(arrival, service, costs):
        ref = PUBLISHED[table_id][r.policy_name]
        ref_z = ref[0] if isinstance(ref[0], tuple) else (ref[0],)
        got_z = r.thresholds.sorted_view if r.policy_name.startswith("MT") else (r.thresholds.z_max,)
        m = r.measures
        rows.append({
            "table": table_id, "policy": r.policy_name, "Z": r.threshold_label(),
            "Z_sorted": " ".join(map(str, got_z)), "Z_ref": " ".join(map(str, ref_z)),
            "Z_match": sorted(got_z) == sorted(ref_z),
            "TC": m.total_cost, "TC_ref": ref[1],
            "TC_rel_dev": (m.total_cost - ref[1]) / ref[1],
            "dTC": r.deltas["TC"], "dTC_ref": ref[2],
            "EX-": m.e_backlog, "EX-_ref": ref[3],
            "EX+": m.e_inventory, "EX+_ref": ref[4],
            "P0": m.p_stockout, "P0_ref": ref[5],
        })
    return rows


def _figure_cases(fid: str):
    role, sign, _ = FIGURES[fid]
    variability = ("lo", "hi")
    if role == "both":
        for var, sa, ss in product(variability, ("pos", "neg"), ("pos", "neg")):
            yield var, f"t31-{sa}-{var}", f"t31-{ss}-{var}", True, True
    elif role == "arrival":
        for var in variability:
            yield var, f"t31-{sign}-{var}", "exp", True, False
    else:
        for var in variability:
            yield var, "exp", f"t31-{sign}-{var}", False, True


def reproduce_figure(fid: str, costs: CostParameters = COSTS, thetas=None,
                     jobs: int = 1) -> list[dict]:
    """Plot-ready series: optimal thresholds and the benchmark's cost gap per theta."""
    if fid not in FIGURES:
        raise KeyError(f"unknown figure {fid!r}")
    bench = FIGURES[fid][2]
    thetas = theta_grid() if thetas is None else thetas
    rows = []
    for var, a_name, s_name, sa, ss in _figure_cases(fid):
        arrival, service = load_system(preset(a_name), preset(s_name))
        for pt in theta_sweep(arrival, service, costs, thetas, sa, ss,
                              names=("MTWA", bench), jobs=jobs):
            opt, other = pt.results
            rows.append({
                "figure": fid, "variability": var, "arrival": a_name, "service": s_name,
                "theta": pt.theta, "rho1_arrival": pt.rho1_arrival,
                "rho1_service": pt.rho1_service, "Z_opt": str(opt.thresholds),
                "Z_" + bench.lower(): other.threshold_label(),
                "TC_opt": opt.measures.total_cost, "TC_bench": other.measures.total_cost,
                "gap_pct": other.deltas["TC"],
            })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: f"{v:.6g}" if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


__all__ = ["PUBLISHED", "TABLE_SYSTEMS", "FIGURES", "REPRO_IDS", "POLICY_NAMES",
           "load_system", "table_system", "reproduce_table", "reproduce_figure",
           "rows_to_csv"]
