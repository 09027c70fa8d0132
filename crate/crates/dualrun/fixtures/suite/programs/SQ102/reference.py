import os
import sys

amounts = [int(l) for l in sys.stdin if l.strip()]
os.makedirs("out", exist_ok=True)
with open("out/SUMMARY.TXT", "w") as f:
    f.write(f"COUNT {len(amounts):05d}\n")
    f.write(f"MIN   {min(amounts, default=0):09d}\n")
    f.write(f"MAX   {max(amounts, default=0):09d}\n")
    f.write(f"TOTAL {sum(amounts):012d}\n")
print("DONE")
