# coding: utf-8

# # How much does re-encryption cost, and how does it scale?
#
# Two experiments, both in simulated seconds. The first pits the proxy
# re-encryption path against a baseline where the owner hands keys over
# off-chain. The second piles up concurrent buyers against a single
# sensor.

# In[1]:

import statistics
import time

from cbpre.actors import ScenarioConfig
from cbpre.bench import bench_impact, bench_scale


# ## PRE versus baseline
#
# Thirty repetitions. Repetition r uses seed r in both modes, so both see
# the same block arrivals.

# In[2]:

t = time.perf_counter()
impact = bench_impact(30)
print(f"ran in {time.perf_counter() - t:.2f} s of wall time")
print(f"PRE      mean {impact.pre_mean:6.2f} s  sd {statistics.stdev(impact.pre):5.2f}")
print(f"baseline mean {impact.baseline_mean:6.2f} s  sd {statistics.stdev(impact.baseline):5.2f}")
print(f"overhead {100 * impact.overhead:.1f}%")


# Where does the extra time go? Average each phase over the PRE rows and
# over the baseline rows.

# In[3]:

phases = ["t_request_mine", "t_rekey_mine", "t_reencrypt", "t_addr_mine", "t_fetch_decrypt"]
for label in ("pre", "baseline"):
    rows = [r for r in impact.rows if r.scenario.startswith(label + "/")]
    means = "  ".join(f"{p[2:]}={statistics.fmean(getattr(r, p) for r in rows):5.2f}" for p in phases)
    print(f"{label:<9} {means}")


# The rekey_mine column is the story. In the baseline that phase shrinks
# to an off-chain hand-off, while with PRE it costs a whole block wait.
#
# Back of the envelope: a transaction submitted at a random moment waits
# one propagation second plus, with exponential block gaps, a full mean
# interval of 13 s. Add half a 2 s polling period for whoever reacts.
# Three such hops plus the compute gives about 49 s for PRE; two hops
# give about 31 s for the baseline.

# In[4]:

cfg = ScenarioConfig()
hop = cfg.tx_propagation_s + cfg.block_interval_s + cfg.poll_interval_s / 2
k = cfg.readings_per_sensor
compute = k * (cfg.reencrypt_compute_s + cfg.decrypt_compute_s)
print(f"PRE estimate      {3 * hop + k * cfg.rekey_compute_s + compute:.2f} s")
print(f"baseline estimate {2 * hop + cfg.offchain_delay_s + compute:.2f} s")


# Thirty runs is a small sample with a standard deviation near 20 s, so
# the measured means above sit a few seconds off these figures.

# ## Load sweep
#
# One sensor with a single reading, n buyers all asking at once, blocks
# holding ten transactions. Up to ten buyers the queue barely shows; past
# that the mempool backs up and every extra five buyers costs more than a
# block.

# In[5]:

t = time.perf_counter()
scale = bench_scale(10)
print(f"ran in {time.perf_counter() - t:.2f} s of wall time")
for n in scale.loads:
    bar = "#" * int(scale.mean_latency[n] / 5)
    print(f"n={n:3d}  {scale.mean_latency[n]:7.2f} s  {scale.mean_block_hops[n]:5.2f} blocks  {bar}")
print("inversions:", scale.inversions())
