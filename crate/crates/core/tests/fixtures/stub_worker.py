"""Minimal exec/1 worker used to exercise the orchestrator's process pool.

The program text selects the behaviour: `hang`, `crash`, `garbage`,
`wrong_id`, `raise`, `env`; anything else runs the tests, where a test
passes iff its source is `pass`.
"""
import json
import os
import sys
import time


def respond(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


for line in sys.stdin:
    req = json.loads(line)
    program = req["program"].strip()
    names = [t["name"] for t in req["tests"]]
    if program == "hang":
        time.sleep(60)
    if program == "crash":
        sys.exit(1)
    if program == "garbage":
        sys.stdout.write("this is not json\n")
        sys.stdout.flush()
        continue
    rid = "other" if program == "wrong_id" else req["id"]
    if program == "raise":
        tests = [{"name": n, "passed": False, "message": "boom"} for n in names]
        respond({"id": rid, "status": "error", "tests": tests, "duration_ms": 0})
        continue
    if program == "env":
        msg = os.environ.get("QVF_TIMEOUT_MS", "")
        tests = [{"name": n, "passed": True, "message": msg} for n in names]
        respond({"id": rid, "status": "ok", "tests": tests, "duration_ms": 0})
        continue
    tests = [
        {"name": t["name"], "passed": t.get("source") == "pass", "message": ""}
        for t in req["tests"]
    ]
    respond({"id": rid, "status": "ok", "tests": tests, "duration_ms": 1})
