"""Command-line front end.

Commands: per-sweep, search, connectivity, bench, gen-fixtures.  Each
command reads a single YAML config, runs non-interactively, and emits
CSV/JSON files stamped with a run manifest (command, config digest, seed,
version, timestamp).  Identical (config, seed) reproduce identical data
rows; the worker count never changes results.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
import yaml

from . import __version__
from . import channel as ch
from . import connectivity as conn
from . import detect as det
from . import linksim, search
from .core import (DEFAULT_NUMEROLOGY, DEFAULT_USE_CASES, UseCase,
                   constellation_for, mcs_entry)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_digest: str
    seed: int
    version: str
    timestamp: str

    def header_lines(self):
        d = asdict(self)
        return [f"{k}: {v}" for k, v in d.items()]


def _load_config(path) -> tuple[dict, str]:
    try:
        raw = open(path, "rb").read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    digest = hashlib.sha256(raw).hexdigest()
    cfg = yaml.safe_load(raw)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg, digest


def _manifest(command, digest, seed) -> RunManifest:
    return RunManifest(command=command, config_digest=digest, seed=seed,
                       version=__version__,
                       timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))


def _write_csv(path, manifest, header, rows):
    with open(path, "w", newline="") as f:
        for line in manifest.header_lines():
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _fixture_config(cfg: dict, seed: int) -> search.FixtureConfig:
    profile = cfg.get("profile", "tdl-b-like")
    if isinstance(profile, dict):
        prof = ch.profile_from_dict(profile)
    elif profile in ch.PROFILES:
        prof = ch.PROFILES[profile]
    else:
        raise ConfigError(f"unknown channel profile {profile!r}")
    region_name = cfg.get("region", "R1")
    if region_name not in ch.REGIONS:
        raise ConfigError(f"unknown region {region_name!r}")
    mob = ch.MobilityConfig(speed_kmh=cfg.get("speed_kmh", 30.0),
                            carrier_hz=cfg.get("carrier_hz", 3.5e9))
    return search.FixtureConfig(
        profile=prof, mobility=mob, region=ch.REGIONS[region_name],
        channels_per_group=cfg.get("channels_per_group", 50),
        base_seed=seed, n_subcarriers=cfg.get("n_subcarriers", 24))


# ---------------------------------------------------------------------------
# per-sweep
# ---------------------------------------------------------------------------

def cmd_per_sweep(cfg: dict, manifest: RunManifest, out, seed: int):
    snrs = cfg.get("snr_db")
    if not snrs:
        raise ConfigError("empty sweep: snr_db list is required")
    detectors = cfg.get("detectors", ["mmse", "mpnl"])
    n = cfg.get("n_streams", 4)
    m = cfg.get("m_antennas", 8)
    mcs = mcs_entry(cfg.get("mcs", 7))
    n_channels = cfg.get("channels", 10)
    frames = cfg.get("frames_per_channel", 20)
    fx = _fixture_config(cfg, seed)
    rows = []
    for snr in snrs:
        region = ch.SnrRegion(name=f"{snr}dB", target_snr_db=float(snr),
                              jitter_db=cfg.get("snr_jitter_db", 0.0))
        grids, nvs = [], []
        for i, ss in enumerate(np.random.SeedSequence(
                entropy=(seed, int(round(snr * 1000)))).spawn(n_channels)):
            g = ch.tdl_generate(fx.profile, fx.mobility, fx.numerology,
                                m=m, n=n, seed=ss,
                                n_subcarriers=fx.n_subcarriers)
            grids.append(g)
            nvs.append(ch.calibrate_noise(region, g, ss.spawn(1)[0]))
        for name in detectors:
            lc = linksim.LinkConfig(
                n_streams=n, m_antennas=m, mcs=mcs, detector=name,
                n_paths=cfg.get("n_paths", 32), csi=cfg.get("csi", "genie"),
                seed=seed,
                rb_per_vehicle=min(
                    linksim.default_rb_allocation(mcs),
                    fx.n_subcarriers // DEFAULT_NUMEROLOGY.sc_per_rb))
            res = linksim.measure_per(lc, grids, nvs,
                                      frames_per_channel=frames)
            rows.append([snr, name, f"{res.per:.6g}",
                         f"{res.ci95_halfwidth:.6g}", res.frames])
    _write_csv(out, manifest, ["snr_db", "detector", "per", "ci95", "frames"],
               rows)


# ---------------------------------------------------------------------------
# search / heatmap
# ---------------------------------------------------------------------------

def cmd_search(cfg: dict, manifest: RunManifest, out, seed: int):
    fx = _fixture_config(cfg, seed)
    cells = search.heatmap(
        streams=cfg.get("streams", [2, 4, 6]),
        mcs_list=cfg.get("mcs", [2, 7, 12]),
        detectors=cfg.get("detectors", ["mmse", "mpnl"]),
        fixtures=fx,
        frames_per_channel=cfg.get("frames_per_channel", 8),
        n_paths=cfg.get("n_paths", 32),
        progress=lambda c: print(
            f"  {c.detector} N={c.n_streams} mcs={c.mcs_index} -> "
            f"{c.min_antennas or 'unsupported'}", file=sys.stderr))
    search.write_heatmap_csv(cells, out,
                             manifest_lines=manifest.header_lines())


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

def _use_cases_from_config(cfg: dict):
    if "use_cases" not in cfg:
        return DEFAULT_USE_CASES
    ucs = []
    for item in cfg["use_cases"]:
        try:
            ucs.append(UseCase(item["name"], float(item["rate_mbps"]) * 1e6))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad use case entry {item!r}: {e}") from None
    if not ucs:
        raise ConfigError("use_cases override is empty")
    return tuple(ucs)


def cmd_connectivity(cfg: dict, manifest: RunManifest, out, seed: int):
    table_path = cfg.get("table_csv")
    if table_path is None:
        table_path = shipped_heatmap_path()
    try:
        cells = search.read_heatmap_csv(table_path)
    except OSError as e:
        raise ConfigError(f"cannot read antenna table: {e}") from None
    table = search.cells_to_table(cells)
    mcs_index = cfg.get("mcs", 12)
    se = cfg.get("se") or mcs_entry(mcs_index).spectral_efficiency
    rows = conn.connectivity_report(
        use_cases=_use_cases_from_config(cfg), se=se, table=table,
        mcs_index=mcs_index,
        antenna_budgets=cfg.get("antenna_budgets", [2, 4, 6, 8]))
    payload = {
        "manifest": asdict(manifest),
        "spectral_efficiency": se,
        "mcs": mcs_index,
        "rows": [
            {"use_case": r.use_case, "antenna_budget": r.antenna_budget,
             "streams": r.streams, "vehicles": r.vehicles,
             "gain_ratio": (None if r.gain_ratio is None
                            else float(r.gain_ratio))}
            for r in rows],
    }
    with open(out, "w") as f:
        json.dump(payload, f, indent=2, default=str)
    csv_rows = [[r.use_case, r.antenna_budget,
                 r.vehicles.get("mmse"), r.vehicles.get("mpnl"),
                 r.gain_ratio] for r in rows]
    _write_csv(str(out) + ".csv", manifest,
               ["use_case", "antenna_budget", "vehicles_mmse",
                "vehicles_mpnl", "gain_ratio"], csv_rows)


def shipped_heatmap_path():
    from importlib.resources import files
    return files("mpnlsim").joinpath("data/heatmap_default.csv")


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_chunk(args):
    """Detect one seeded chunk of instances; pure function of its args."""
    (name, n, m, order, n_paths, snr_db, seed, chunk_idx, chunk_size) = args
    c = constellation_for(order)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(seed, chunk_idx)))
    h = (rng.standard_normal((chunk_size, m, n))
         + 1j * rng.standard_normal((chunk_size, m, n))) / np.sqrt(2)
    labels_true = rng.integers(0, order, (chunk_size, n))
    nv = n / 10 ** (snr_db / 10)
    noise = np.sqrt(nv / 2) * (rng.standard_normal((chunk_size, m))
                               + 1j * rng.standard_normal((chunk_size, m)))
    y = np.einsum("bmn,bn->bm", h, c.points[labels_true]) + noise
    if name == "mpnl":
        plan = det.mpnl_plan_batch(h, nv, n_paths, c)
        labels, metrics, best = det.mpnl_detect_batch(plan, h, y, c)
        hard = np.take_along_axis(labels, best[:, None, None], axis=1)[:, 0]
    elif name == "ml":
        labels, metrics, best = det.ml_detect_batch(h, y, nv, c)
        hard = labels[np.arange(chunk_size), best]
    elif name in ("zf", "mmse"):
        hard, _ = det.linear_detect_batch(h, y, nv, c, name)
    else:
        raise ValueError(f"detector {name!r} not benchmarkable")
    return chunk_idx, hard


def run_bench_once(name, n, m, order, n_paths, snr_db, seed,
                   n_instances, chunk_size, workers):
    """One timed pass; returns (elapsed seconds, stacked hard decisions)."""
    chunks = [(name, n, m, order, n_paths, snr_db, seed, i, chunk_size)
              for i in range(n_instances // chunk_size)]
    t0 = time.perf_counter()
    if workers == 1:
        results = [_bench_chunk(a) for a in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bench_chunk, chunks, chunksize=1))
    elapsed = time.perf_counter() - t0
    results.sort(key=lambda t: t[0])
    return elapsed, np.concatenate([r[1] for r in results])


def cmd_bench(cfg: dict, manifest: RunManifest, out, seed: int):
    name = cfg.get("detector", "mpnl")
    n = cfg.get("n_streams", 8)
    m = cfg.get("m_antennas", 8)
    order = cfg.get("modulation_order", 16)
    n_paths = cfg.get("n_paths", 32)
    snr_db = cfg.get("snr_db", 20.0)
    n_instances = cfg.get("n_instances", 8192)
    chunk_size = cfg.get("chunk_size", 512)
    workers_list = cfg.get("workers", [1, 4, 8])
    repeats = cfg.get("repeats", 5)
    if 1 not in workers_list:
        workers_list = [1] + list(workers_list)
    rows = []
    baseline = None
    ref_hard = None
    for w in workers_list:
        times = []
        for _ in range(repeats):
            elapsed, hard = run_bench_once(name, n, m, order, n_paths,
                                           snr_db, seed, n_instances,
                                           chunk_size, w)
            times.append(elapsed)
        if ref_hard is None:
            ref_hard = hard
        identical = bool(np.array_equal(hard, ref_hard))
        med = statistics.median(times)
        rate = n_instances / med
        if w == 1:
            baseline = rate
        rows.append([name, n, m, order, n_paths, w, f"{med:.4f}",
                     f"{rate:.1f}", f"{rate / baseline:.3f}", identical])
    _write_csv(out, manifest,
               ["detector", "n", "m", "order", "n_paths", "workers",
                "median_s", "detections_per_s", "speedup", "bit_identical"],
               rows)
    return rows


# ---------------------------------------------------------------------------
# gen-fixtures
# ---------------------------------------------------------------------------

def cmd_gen_fixtures(cfg: dict, manifest: RunManifest, out, seed: int):
    """Write channel fixture groups as .npz plus a JSON manifest."""
    import os
    fx = _fixture_config(cfg, seed)
    streams = cfg.get("streams", [2, 4, 6])
    m_values = cfg.get("m_antennas", list(range(2, 33)))
    os.makedirs(out, exist_ok=True)
    index = {"manifest": asdict(manifest), "groups": []}
    for n in streams:
        for m in m_values:
            grids, nvs = fx.channels(n, m)
            fname = f"chan_n{n}_m{m}.npz"
            np.savez_compressed(
                os.path.join(out, fname),
                h=np.stack([g.h for g in grids]),
                noise_var=np.asarray(nvs))
            index["groups"].append({"n": n, "m": m, "file": fname,
                                    "channels": len(grids)})
    with open(os.path.join(out, "fixtures.json"), "w") as f:
        json.dump(index, f, indent=2)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "per-sweep": cmd_per_sweep,
    "search": cmd_search,
    "connectivity": cmd_connectivity,
    "bench": cmd_bench,
    "gen-fixtures": cmd_gen_fixtures,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mpnlsim",
        description="Uplink MU-MIMO detection, antenna-search, and "
                    "connectivity experiments")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg, digest = _load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if args.workers is not None:
            cfg["workers"] = [args.workers]
        manifest = _manifest(args.command, digest, seed)
        COMMANDS[args.command](cfg, manifest, args.out, seed)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
