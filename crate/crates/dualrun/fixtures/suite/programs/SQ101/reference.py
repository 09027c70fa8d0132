import os
import sys

os.makedirs("out", exist_ok=True)
seq = 0
with open("out/LEDGER.DAT", "w") as ledger:
    for line in sys.stdin:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        name, amount = line.split(",", 1)
        seq += 1
        ledger.write(f"{seq:05d} {name[:20]:<20}{int(amount):09d}\n")
print(f"RECORDS WRITTEN: {seq:05d}")
