#!/usr/bin/env python3
"""
Command-line entry point for the exploration simulator.

    explore  run one seeded exploration episode and export its artifacts
    eval     print the tree-connectivity utility of a serialized pose graph
    oracle   run the numerical self-check suites
"""

import os
import sys
import logging
import argparse
import shutil
from pathlib import Path
from typing import List, Optional

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from benchmarks.oracles import SUITES, run_oracles
from control.episode import run_episode
from core.graph import WeightedPoseGraph
from core.graph_io import read_pose_graph, write_pose_graph
from core.world import load_world
from optimality.criteria import dopt_graph, dopt_matrix, log_tree_weight
from utils.config import RunConfig, load_config
from utils.errors import ConfigError, InvalidInputError, ParseError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EPOCH_CAP = 2

LOG_FILE = 'episode_log.csv'
GRID_FILE = 'final_grid.pgm'
GRAPH_FILE = 'final_graph.txt'
CONFIG_FILE = 'run_config.conf'
CANDIDATE_DIR = 'candidates'


def setup_logging(verbose: bool = False):
    """Setup logging configuration"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def cmd_explore(run: RunConfig) -> int:
    """Run one episode and write the log, final grid, final graph and effective config"""
    try:
        run.validate()
        world = load_world(run.world_file)
        config = run.config.get_exploration_config()
    except (OSError, InvalidInputError, ConfigError) as e:
        logging.error(f"❌ Cannot start exploration: {str(e)}")
        return EXIT_ERROR

    logging.info(f"🤖 Exploring {run.world_file} with seed {run.seed}")
    log = run_episode(world, config, run.seed, dump_candidates=run.dump_candidates)

    out = Path(run.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        log.write_csv(out / LOG_FILE)
        log.final_grid.write_pgm(out / GRID_FILE)
        write_pose_graph(log.final_graph, out / GRAPH_FILE)
        run.config.save_to_file(out / CONFIG_FILE)

        candidate_dir = out / CANDIDATE_DIR
        if candidate_dir.exists():
            shutil.rmtree(candidate_dir)
        if run.dump_candidates:
            candidate_dir.mkdir()
            for epoch, frontier_id, graph in log.candidate_graphs:
                write_pose_graph(graph, candidate_dir / f"epoch_{epoch:03d}_frontier_{frontier_id:03d}.txt")
    except OSError as e:
        logging.error(f"❌ Failed to write artifacts to {out}: {str(e)}")
        return EXIT_ERROR

    summary = log.summary
    logging.info(f"✅ Artifacts written to {out}")
    print(f"epochs: {summary.get('epochs', len(log.records))}")
    print(f"coverage: {summary.get('coverage', 0.0):.4f}")
    print(f"ate_rmse: {summary.get('ate_rmse', 0.0):.4f}")
    print(f"loop closures: {summary.get('num_loop_closures', 0)}")

    if log.incomplete:
        logging.warning("⚠️ Epoch cap reached before exploration finished")
        return EXIT_EPOCH_CAP
    return EXIT_OK


def cmd_eval(graph_file: Path) -> int:
    """
    Print dopt_graph and log_tree_weight of a serialized graph.

    Edges without a weight comment are weighted with the D-optimality of their
    information matrix.
    """
    try:
        graph, weights = read_pose_graph(graph_file)
    except ParseError as e:
        print(f"parse error: line {e.line_no}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        logging.error(f"❌ Cannot read {graph_file}: {str(e)}")
        return EXIT_ERROR

    if weights is None:
        weights = tuple(dopt_matrix(edge.info.m) for edge in graph.edges)
    try:
        weighted = WeightedPoseGraph(graph, weights)
        ltw = log_tree_weight(weighted)
        utility = dopt_graph(weighted)
    except InvalidInputError as e:
        logging.error(f"❌ Cannot evaluate {graph_file}: {str(e)}")
        return EXIT_ERROR

    print(f"dopt_graph: {utility:.9g}")
    print(f"log_tree_weight: {ltw:.9g}")
    if utility == 0.0:
        print("note: graph is disconnected, no spanning tree exists")
    return EXIT_OK


def cmd_oracle(suite: str, seed: int = 0) -> int:
    """Run one oracle suite (or all of them) and print the pass/fail table"""
    try:
        table, passed = run_oracles(suite, seed=seed)
    except InvalidInputError as e:
        logging.error(f"❌ {str(e)}")
        return EXIT_ERROR
    print(table.to_string(index=False))
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Active graph-SLAM exploration simulator')
    parser.add_argument('--config', type=Path, default=None,
                        help='key = value parameter file')
    parser.add_argument('--print-config', action='store_true',
                        help='Print the effective configuration and exit')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='Enable verbose logging')
    subparsers = parser.add_subparsers(dest='command')

    explore = subparsers.add_parser('explore', help='Run one exploration episode')
    explore.add_argument('--world', type=Path, required=True, help='World description file')
    explore.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    explore.add_argument('--out', type=Path, default=Path('runs/latest'),
                         help='Output directory (default: runs/latest)')
    explore.add_argument('--jobs', type=int, default=None,
                         help='Parallel candidate evaluation workers')
    explore.add_argument('--epoch-cap', type=int, default=None,
                         help='Maximum number of decision epochs')
    explore.add_argument('--dump-candidates', action='store_true',
                         help='Write every hallucinated candidate graph')

    evaluate = subparsers.add_parser('eval', help='Evaluate a serialized pose graph')
    evaluate.add_argument('graph_file', type=Path)

    oracle = subparsers.add_parser('oracle', help='Run numerical self-checks')
    oracle.add_argument('suite', help=f"One of {', '.join(SUITES)} or all")
    oracle.add_argument('--seed', type=int, default=0)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    overrides = {
        'jobs': getattr(args, 'jobs', None),
        'epoch_cap': getattr(args, 'epoch_cap', None),
    }
    try:
        config = load_config(args.config, overrides)
    except (OSError, ConfigError) as e:
        logging.error(f"❌ Failed to load configuration: {str(e)}")
        return EXIT_ERROR

    if args.print_config:
        print(config.to_text(), end='')
        return EXIT_OK

    if args.command == 'explore':
        run = RunConfig(world_file=args.world, seed=args.seed, output_dir=args.out,
                        config=config, dump_candidates=args.dump_candidates)
        return cmd_explore(run)
    if args.command == 'eval':
        return cmd_eval(args.graph_file)
    if args.command == 'oracle':
        return cmd_oracle(args.suite, seed=args.seed)

    parser.print_help()
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
