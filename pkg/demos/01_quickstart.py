"""
Per-subpopulation statistics from one sketch
=============================================

A toy video-session stream: each record has a city, a device and the CDN
node that served it. We sketch the stream once and then ask for the
traffic volume, diversity and entropy of CDN nodes for any combination of
city and device, including ones we did not think of in advance.
"""

import random

from hydrasketch import DataRecord, ExactStore, HydraSketch, Schema, plan

rng = random.Random(0)
cities = ["NYC", "SF", "LA", "CHI", "SEA"]
devices = ["tv", "phone", "web"]

# SF phones are pinned to two nodes; everyone else spreads over twenty
records = []
for _ in range(20_000):
    city, device = rng.choice(cities), rng.choice(devices)
    pool = 2 if (city, device) == ("SF", "phone") else 20
    records.append(DataRecord.of([city, device], f"cdn{rng.randrange(pool)}"))

# %%
# Size the sketch for +-10% error on subpopulations holding at least 1% of
# the stream, then ingest. Every record touches its 2^2 = 4 subpopulations.
cfg = plan(delta=0.1, eps_us=0.1, gmin_ratio=1e-2, n_keys=400)
print(f"grid {cfg.r}x{cfg.w}, count sketches {cfg.r_cs}x{cfg.w_cs}, L={cfg.L}, k={cfg.k}")
hs = HydraSketch(cfg).ingest_many(records)

# %%
# Queries take a subpopulation key. The schema maps column names to indices.
schema = Schema(("city", "device"), "cdn")
exact = ExactStore().ingest_many(records)

for label, key in [
    ("everything", schema.key()),
    ("SF", schema.key(city="SF")),
    ("phones", schema.key(device="phone")),
    ("SF phones", schema.key(city="SF", device="phone")),
]:
    est = hs.query_many(key, ["l1", "cardinality", "entropy"])
    ref = exact.query_many(key, ["l1", "cardinality", "entropy"])
    print(f"{label:<11}" + "  ".join(f"{s}={est[s]:8.2f} (exact {ref[s]:8.2f})" for s in est))

# %%
# Heavy hitters: metric values holding at least a given share of a
# subpopulation's records.
print("SF phone heavy hitters:", hs.heavy_hitters(schema.key(city="SF", device="phone"), 0.3))
