"""Write the shipped topologies and the reference scenario into src/duobot/data."""

import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "duobot" / "data"

DEVICES = [{"name": "iphone", "capacity": 1000.0}, {"name": "ipad", "capacity": 1000.0},
           {"name": "body", "capacity": 1000.0}, {"name": "server", "capacity": 1000.0}]
HOSTS = {"eyes": "ipad", "motion": "body", "backend": "server"}
LINKS = [{"a": "iphone", "b": "ipad", "base_ms": 5.0, "jitter_ms": 3.0},
         {"a": "iphone", "b": "body", "base_ms": 5.0, "jitter_ms": 3.0},
         {"a": "ipad", "b": "body", "base_ms": 5.0, "jitter_ms": 3.0},
         {"a": "ipad", "b": "server", "base_ms": 20.0, "jitter_ms": 3.0}]


def topology(name, placement):
    return {"format": "duobot-topology", "version": 1, "name": name, "devices": DEVICES,
            "placement": placement, "hosts": HOSTS, "links": LINKS}


COMMANDS = [
    "marhaba ya rashid show map",
    "hala ya rashid wave",
    "sabah ya rashid book appointment date monday",
    "marhaba ya rashid housing request form",
    "ya rashid name ahmed",
    "ya rashid phone five five one",
    "hala ya rashid guess my age",
    "kayf ya rashid raise hand",
    "shukran ya rashid stop",
    "marhaba ya rashid book balance",
    "sabah ya rashid selfie",
    "hala ya rashid show map",
    "marhaba ya rashid land inquiry form",
    "ya rashid name fatima",
    "kayf ya rashid nod",
    "sabah ya rashid shake hand",
    "hala ya rashid bow",
    "marhaba ya rashid guess my age",
    "shukran ya rashid clap",
    "marhaba ya rashid stop",
]
SPACING_MS = 7000
FACES = [(3500, 6.0), (24500, -6.0), (59500, 6.0), (101500, -6.0)]
FAULT_MS = 7000 * 12 + 3500


def reference():
    timeline = [{"t_ms": 1000 + i * SPACING_MS, "say": c} for i, c in enumerate(COMMANDS)]
    timeline += [{"t_ms": t, "face": {"yaw": y, "pitch": 0.0}} for t, y in FACES]
    timeline.append({"t_ms": FAULT_MS, "fault": "speech service dropped"})
    timeline.sort(key=lambda e: e["t_ms"])
    return {"format": "duobot-scenario", "version": 1, "name": "reference", "topology": "dual",
            "seed": 7, "timeline": timeline}


def main():
    (DATA / "topologies").mkdir(exist_ok=True)
    (DATA / "scenarios").mkdir(exist_ok=True)
    dual = topology("dual", {"WAKEWORD": "iphone", "VISION": "iphone", "LVCSR": "ipad", "DIALOG": "ipad"})
    single = topology("single", {"WAKEWORD": "ipad", "VISION": "iphone", "LVCSR": "ipad", "DIALOG": "ipad"})
    for name, doc in [("topologies/dual.json", dual), ("topologies/single.json", single),
                      ("scenarios/reference.json", reference())]:
        (DATA / name).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
