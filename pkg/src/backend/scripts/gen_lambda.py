import argparse
from pathlib import Path

from src.backend.corpus import gen_lambda_term, mcfa_facts
from src.backend.terms import NestedFact


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Write a seeded, terminating closed lambda term as a .facts file."
    )
    parser.add_argument("--depth", type=int, required=True, help="Maximum term depth (>= 1).")
    parser.add_argument("--seed", type=int, default=0, help="Random seed.")
    parser.add_argument(
        "--max-size", type=int, default=None, help="Redraw terms with more nodes than this."
    )
    parser.add_argument(
        "--target",
        choices=["interpreter", "mcfa", "mcfa-nested"],
        default="interpreter",
        help="Which program the input is for; this picks the seed fact's shape.",
    )
    parser.add_argument(
        "--out",
        type=Path,
        required=True,
        help="Directory to write input.facts into (created if missing).",
    )
    return parser.parse_args(argv)


def main(argv=None) -> Path:
    args = parse_args(argv)
    facts = gen_lambda_term(args.depth, args.seed, max_size=args.max_size)
    if args.target != "interpreter":
        term = facts[0].args[0]
        assert isinstance(term, NestedFact)
        facts = mcfa_facts(term, nested=args.target == "mcfa-nested")
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "input.facts"
    path.write_text("".join(f"{fact}.\n" for fact in facts), encoding="utf-8")
    print(f"Wrote {path}")
    return path


if __name__ == "__main__":
    main()
