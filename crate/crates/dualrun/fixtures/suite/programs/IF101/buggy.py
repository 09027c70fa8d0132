import sys

vals = [int(l) for l in sys.stdin if l.strip()]
if not vals:
    print("NO DATA")
    sys.exit(0)
print(f"MAX {max(vals):06d}")
print(f"MIN {min(vals):06d}")
print(f"MEAN{sum(vals) / len(vals):>9.2f}")
