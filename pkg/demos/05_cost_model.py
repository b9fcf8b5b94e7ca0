"""
Why logical shuffles win: a memory-traffic model
================================================

Two ways to regroup a point cloud between attention rounds: re-sort and
physically scatter it every round (the serialization approach), or hash
it into buckets once and rotate scope indices from then on.  The model
prices each phase with throughput constants typical of one accelerator
generation and shows where the time actually goes.
"""

from bucketswin import costmodel

sizes = list(range(100_000, 700_000, 100_000))
rows = costmodel.sweep_report(sizes, pipeline="both")

print(f"{'n':>8} {'serialize totals':>17} {'hashed totals':>14} "
      f"{'reorder ratio':>14}")
for n in sizes:
    ptv3 = next(r for r in rows if r["n"] == n and r["pipeline"] == "ptv3")
    fl = next(r for r in rows if r["n"] == n and r["pipeline"] == "flash3d")
    print(f"{n:>8} {ptv3['total_seconds'] * 1e3:>15.2f}ms "
          f"{fl['total_seconds'] * 1e3:>12.2f}ms "
          f"{ptv3['serialization_psh_ratio']:>13.0f}x")

# scaling shape: second differences of the totals are zero for the
# hashed pipeline (perfectly linear in n) while the per-round sort
# keeps bending the serialization pipeline upward
flash = [r["total_seconds"] for r in rows if r["pipeline"] == "flash3d"]
ptv3 = [r["total_seconds"] for r in rows if r["pipeline"] == "ptv3"]
d2f = [c - 2 * b + a for a, b, c in zip(flash, flash[1:], flash[2:])]
d2p = [c - 2 * b + a for a, b, c in zip(ptv3, ptv3[1:], ptv3[2:])]
print(f"\nhashed pipeline curvature (ns):    "
      f"{['%+.2f' % (d * 1e9) for d in d2f]}")
print(f"serialize pipeline curvature (ns): "
      f"{['%+.2f' % (d * 1e9) for d in d2p]}")

# where one 400k-point run spends its time
rep = costmodel.model_ptv3(400_000, d=64, rounds=12)
print(f"\nserialization pipeline at n=400k:")
for name, ph in rep.phases.items():
    share = ph.seconds / rep.total_seconds
    print(f"  {name:<10} {ph.seconds * 1e3:8.2f}ms  {share:6.1%}")
rep = costmodel.model_flash3d(400_000, d=64, rounds=12)
print(f"hashed pipeline at n=400k:")
for name, ph in rep.phases.items():
    share = ph.seconds / rep.total_seconds
    print(f"  {name:<10} {ph.seconds * 1e3:8.2f}ms  {share:6.1%}")

# the shuffle phase dominates the serialization pipeline; hashing turns
# it into a one-time cost roughly two orders of magnitude smaller
