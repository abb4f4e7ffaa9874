# File: main.py

import argparse
import logging
import sys
from typing import List, Optional

from core.errors import ConfigError
from lab.commands import run
from lab.config import KINDS, PROBLEMS, load_config

LOG_FORMAT = "[%(asctime)s][%(levelname)s] %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csl", description="Conformal spectral laboratory")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [experiment] and [budget] sections")
    common.add_argument("--mesh", help="built-in name (disk64, annulus32, mobius64, ...) or .cslmesh path")
    common.add_argument("--metric", help="CSV sidecar with the conformal factor per vertex")
    common.add_argument("--rho", help="CSV sidecar with the boundary density per vertex")
    common.add_argument("--potential", help="CSV sidecar with a Schrödinger potential per vertex")
    common.add_argument("--problem", choices=PROBLEMS)
    common.add_argument("--k", type=int, help="number of non-trivial eigenvalues")
    common.add_argument("--eps", type=float, help="cylinder radius")
    common.add_argument("--lengths", help="cylinder lengths, e.g. '0,0.5,1,2,4'")
    common.add_argument("--tau", type=float, help="factor bound for the comparison sweep")
    common.add_argument("--budget", type=int, help="maximum volume evaluations of the sup search")
    common.add_argument("--measure", choices=("volume", "boundary"))
    common.add_argument("--samples", type=int, help="random conformal factors in the bound sweep")
    common.add_argument("--resolution", type=int, help="resolution of generated sweep meshes")
    common.add_argument("--tolerance", type=float, help="relative tolerance for compare")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="threads for independent sweep points")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", default=None, help="compare unlike results")
    common.add_argument("--stamp", action="store_true", default=None, help="add a timestamp to headers")
    common.add_argument("--verbose", "-v", action="store_true")

    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, parents=[common])
        if kind == "compare":
            p.add_argument("inputs", nargs=2, help="two JSON result files")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose")
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)
    config_path = args.pop("config")
    try:
        config = load_config(config_path, args)
    except ConfigError as exc:
        logging.getLogger("csl").error("%s", exc)
        return exc.exit_code
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
