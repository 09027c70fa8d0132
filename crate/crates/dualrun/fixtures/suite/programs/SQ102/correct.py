import os
import sys

amounts = []
for line in sys.stdin:
    if line.strip():
        amounts.append(int(line))
lo = min(amounts) if amounts else 0
hi = max(amounts) if amounts else 0
os.makedirs("out", exist_ok=True)
with open("out/SUMMARY.TXT", "w") as f:
    f.write("COUNT %05d\n" % len(amounts))
    f.write("MIN   %09d\n" % lo)
    f.write("MAX   %09d\n" % hi)
    f.write("TOTAL %012d\n" % sum(amounts))
print("DONE")
