"""Populate the sweep-result cache used by the acceptance tests.

Runs (or reuses) every ``configs/acceptance_*.yaml`` sweep, storing results
under ``.cache/results/<kind>_<config hash>.json``.
"""
import argparse
import logging
import time
from pathlib import Path

from subsea_capacity.config import cached_sweep, load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("names", nargs="*", default=["acceptance_sdm.yaml", "acceptance_span.yaml"])
    p.add_argument("--cache", default=str(ROOT / ".cache"))
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    for name in args.names:
        cfg = load_config(ROOT / "configs" / name).with_updates(run={"tensor_cache": args.cache})
        t = time.time()
        res = cached_sweep(cfg)
        print(f"{name}: {len(res.points)} points, hash {cfg.config_hash()}, {time.time() - t:.0f} s", flush=True)


if __name__ == "__main__":
    main()
