"""Stand-in evaluator speaking the JSON protocol.

Usage: evaluate_stub.py --stage prelim|full <candidate file>
Scores region text the same way as the built-in synthetic evaluator.
Replace with a script that trains and tests the candidate for real use.
"""
import json
import re
import sys


def body(lines, tag):
    opens = [i for i, l in enumerate(lines) if l.strip() == f"# <SPARK:{tag}>"]
    closes = [i for i, l in enumerate(lines) if l.strip() == f"# </SPARK:{tag}>"]
    if len(opens) != 1 or len(closes) != 1:
        raise ValueError(f"{tag} tags missing or repeated")
    return lines[opens[0] + 1:closes[0]]


def main():
    if len(sys.argv) != 4 or sys.argv[1] != "--stage":
        print(json.dumps({"status": "error", "type": "usage"}))
        return 2
    stage, path = sys.argv[2], sys.argv[3]
    try:
        lines = open(path, encoding="utf-8").read().split("\n")
        op, act = body(lines, "OPERATOR"), body(lines, "ACTION")
    except (OSError, ValueError) as e:
        print(json.dumps({"status": "error", "type": str(e)}))
        return 0
    n = sum(1 for l in op + act if l.strip())
    gates = sum(len(re.findall("gate", l)) for l in act)
    heads = sum(len(re.findall("head", l)) for l in op)
    fitness = min(1.0, max(0.0, 0.05 * gates + 0.02 * heads - 0.01 * max(0, n - 40)))
    out = {"status": "ok", "fitness": fitness}
    if stage == "full":
        out["descriptors"] = {"macs": 600000 + 1000 * n, "params": 50000 + 500 * n}
    print(json.dumps(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
