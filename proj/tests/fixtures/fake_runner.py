"""Stand-in test runner for sandbox and distill tests.

Usage: fake_runner.py IMPL TESTS COVERAGE_JSON

Directives are comment lines of the form `# fake-runner: <word> ...` in
either file:
  pass | fail        outcome (default pass; any `fail` wins)
  coverage=F         line coverage written for IMPL (default 1.0)
  sleep=S            sleep S seconds before finishing
"""
import json
import sys
import time


def directives(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# fake-runner:"):
                out.extend(line[len("# fake-runner:"):].split())
    return out


def main():
    impl, tests, cov_path = sys.argv[1:4]
    words = directives(impl) + directives(tests)
    passed = "fail" not in words
    coverage = 1.0
    for w in words:
        if w.startswith("coverage="):
            coverage = float(w.split("=", 1)[1])
        elif w.startswith("sleep="):
            time.sleep(float(w.split("=", 1)[1]))
    statements = 100
    covered = round(coverage * statements)
    report = {
        "files": {
            impl: {
                "summary": {
                    "covered_lines": covered,
                    "num_statements": statements,
                    "percent_covered": 100.0 * covered / statements,
                }
            }
        }
    }
    with open(cov_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh)
    print("1 passed" if passed else "AssertionError: fake failure\n1 failed")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
