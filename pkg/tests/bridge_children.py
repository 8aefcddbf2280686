"""Scripted child processes for bridge-protocol tests.

Run as: python bridge_children.py <behavior>. Each behavior reads JSON lines
{"id": n, "tokens": [...]} from stdin and responds per its script.
"""

import json
import sys
import time


def main() -> None:
    behavior = sys.argv[1] if len(sys.argv) > 1 else "echo"
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        if behavior == "echo":
            reply = {"id": request["id"], "reward": request["tokens"][0] / 10.0,
                     "note": "extra fields are ignored"}
        elif behavior == "bad_id":
            reply = {"id": request["id"] + 1000, "reward": 0.5}
        elif behavior == "malformed":
            sys.stdout.write("{this is not json\n")
            sys.stdout.flush()
            continue
        elif behavior == "sleep":
            time.sleep(30.0)
            reply = {"id": request["id"], "reward": 0.0}
        elif behavior == "close":
            return
        elif behavior == "nonfinite":
            sys.stdout.write('{"id": %d, "reward": NaN}\n' % request["id"])
            sys.stdout.flush()
            continue
        elif behavior == "fragmented":
            payload = json.dumps({"id": request["id"], "reward": request["tokens"][0] / 10.0})
            half = len(payload) // 2
            sys.stdout.write(payload[:half])
            sys.stdout.flush()
            time.sleep(0.05)
            sys.stdout.write(payload[half:] + "\n")
            sys.stdout.flush()
            continue
        else:
            raise SystemExit(f"unknown behavior {behavior}")
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
