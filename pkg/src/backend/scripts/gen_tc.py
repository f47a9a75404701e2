import argparse
from pathlib import Path

from src.backend.corpus import gen_tc


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Write a seeded random digraph as an edge.tsv fact file."
    )
    parser.add_argument("--nodes", type=int, required=True, help="Number of nodes (>= 1).")
    parser.add_argument(
        "--probability",
        type=float,
        default=0.1,
        help="Probability that any ordered pair of distinct nodes is an edge.",
    )
    parser.add_argument("--seed", type=int, default=0, help="Random seed.")
    parser.add_argument(
        "--out",
        type=Path,
        required=True,
        help="Directory to write edge.tsv into (created if missing).",
    )
    return parser.parse_args(argv)


def main(argv=None) -> Path:
    args = parse_args(argv)
    edges = gen_tc(args.nodes, args.probability, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "edge.tsv"
    path.write_text("".join(f"{src}\t{dst}\n" for src, dst in (edge.args for edge in edges)), encoding="utf-8")
    print(f"Wrote {len(edges)} edges to {path}")
    return path


if __name__ == "__main__":
    main()
