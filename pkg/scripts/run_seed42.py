#!/usr/bin/env python3
"""Run the reference 30-sensor scenario in-process and print the detection
scorecard. Equivalent to:

    labsim run --scenario scenarios/seed42.yaml --target inproc
"""

import json
import time

from lablink.sim import canonical_scenario, run


def main():
    started = time.perf_counter()
    report = run(canonical_scenario(42), "inproc")
    elapsed = time.perf_counter() - started

    print(json.dumps(report.to_dict(), indent=2))
    faulty = {entry["device_id"] for entry in report.injected}
    clean_hits = sorted(
        {d["device_id"] for d in report.detected} - faulty
    )
    injected = {(i["device_id"], i["expected_class"]) for i in report.injected}
    detected = {(d["device_id"], d["fault_class"]) for d in report.detected}
    print(f"\nrecall: {len(injected & detected)}/{len(injected)}")
    print(f"false positives on clean devices: {clean_hits or 'none'}")
    print(f"wall time: {elapsed:.1f}s")


if __name__ == "__main__":
    main()
