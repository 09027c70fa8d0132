import os
import sys

os.makedirs("out", exist_ok=True)
kept = {"ACCEPTED": [], "REJECTED": []}
for line in sys.stdin:
    record = line.rstrip("\n")[:20].rstrip()
    if record:
        kept["ACCEPTED" if record[0] == "A" else "REJECTED"].append(record)
for name, rows in kept.items():
    with open(os.path.join("out", name + ".DAT"), "w") as f:
        f.writelines(r + "\n" for r in rows)
for name, rows in kept.items():
    print("%s %04d" % (name, len(rows)))
