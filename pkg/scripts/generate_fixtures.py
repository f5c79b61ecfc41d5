"""
Dump regression fixtures: the (A, B, C) blocks of every shipped config as
Matrix Market files, plus a CSV of their contraction factors and rates.

Alternates in other languages read the .mtx files and diff the CSV.
"""
import argparse
import logging
from pathlib import Path

import pandas as pd

from saddlecert.config import LOG_LEVEL
from saddlecert.services.experiment import ExperimentService
from saddlecert.services.problems import ProblemService
from saddlecert.services.theory import TheoryService
from saddlecert.storage import init_output_dir, write_frame


def generate(config_dir: Path, out_dir: Path) -> pd.DataFrame:
    rows = []
    for path in sorted(config_dir.glob("*.ini")):
        config = ExperimentService.load_config(str(path))
        sys = ExperimentService.build_system(config.problem)
        pair = ExperimentService.build_pair(config.smoothers, sys)
        descriptor = ProblemService.dump_system(sys, str(out_dir))

        spectral = TheoryService.spectral_report(sys, pair)
        rates = TheoryService.rate_bundle(spectral, TheoryService.check_hypotheses(sys, pair, spectral))
        rows.append(
            {
                "config": path.stem,
                "fingerprint": config.fingerprint,
                "descriptor": descriptor.name,
                "n": sys.n,
                "m": sys.m,
                "delta": spectral.delta,
                "gamma": spectral.gamma,
                "gamma_bar": spectral.gamma_bar,
                "rho1": rates.rho1.value,
                "rho2": rates.rho2.value,
            }
        )
        print(f"  {path.stem}: {sys.label} -> {descriptor}")
    return pd.DataFrame(rows)


def main():
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Dump saddle-point regression fixtures")
    parser.add_argument("--configs", default="configs", help="Directory of experiment configs")
    parser.add_argument("--out", default="tests/fixtures", help="Fixture output directory")
    args = parser.parse_args()

    logging.basicConfig(level=LOG_LEVEL)
    out = init_output_dir(args.out)
    print(f"Generating fixtures from {args.configs} into {out}")
    frame = generate(Path(args.configs), out)
    path = write_frame(frame, out / "rates.csv", list(frame.columns))
    print(f"Done: {len(frame)} systems, rates in {path}")


if __name__ == "__main__":
    main()
