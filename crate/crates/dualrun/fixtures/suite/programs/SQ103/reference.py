import os
import sys

os.makedirs("out", exist_ok=True)
acc = rej = 0
with open("out/ACCEPTED.DAT", "w") as a, open("out/REJECTED.DAT", "w") as r:
    for line in sys.stdin:
        line = line.rstrip("\n")[:20].rstrip()
        if not line:
            continue
        if line.startswith("A"):
            a.write(line + "\n")
            acc += 1
        else:
            r.write(line + "\n")
            rej += 1
print(f"ACCEPTED {acc:04d}")
print(f"REJECTED {rej:04d}")
