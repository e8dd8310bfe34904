"""Run the end-to-end stability pipeline over a tau family and write the report."""
import argparse
import json

from calderon.config import load_config
from calderon.stability import run_pipeline, write_report


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", help="JSON config; shipped defaults if omitted")
    p.add_argument("--out", default="pipeline_out")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    report = run_pipeline(load_config(args.config), workers=args.workers)
    paths = write_report(report, args.out)
    print(json.dumps({"passed": report.passed, "files": [str(x) for x in paths]}, indent=2))


if __name__ == "__main__":
    main()
