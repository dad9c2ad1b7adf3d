# coding: utf-8

# # One sale on the simulated marketplace
#
# A sensor registers, uploads three encrypted readings, and a buyer pays
# for them. Everything runs on simulated time: blocks arrive on average
# every 13 seconds and nobody actually waits.

# In[1]:

from cbpre.actors import Scenario, ScenarioConfig, held_private_keys

scenario = Scenario(ScenarioConfig(seed=0))
trace = scenario.run()


# ## The trace
#
# Each line is one protocol step. The number in brackets is the step in
# the marketplace protocol: registration, upload, request, key posting,
# re-encryption, address posting, and finally decryption plus payment.

# In[2]:

for e in trace.events:
    tag = f"#{e.request_id}" if e.request_id else "  "
    print(f"{e.sim_time:8.2f}s  [{e.step}] {tag} {e.actor:<14} {e.detail}")


# ## What did the buyer get?

# In[3]:

buyer = scenario.requesters[0]
for (sensor_id, ts), reading in sorted(buyer.received.items()):
    same = scenario.originals[(sensor_id, ts)] == reading
    print(f"sensor {sensor_id} at t={ts}: {reading!r}  matches original: {same}")


# ## Where the time went
#
# Most of the latency is waiting for blocks. With proxy re-encryption the
# request, the re-encryption keys and the data address each need their own
# block, one after the other.

# In[4]:

rec = trace.requests[1]
for phase, seconds in rec.phases().items():
    print(f"{phase:<16} {seconds:7.2f} s")
print(f"{'total':<16} {rec.latency_s:7.2f} s over {rec.block_hops} blocks")


# ## Money
#
# The buyer escrowed a deposit. On confirmation the owner is paid the
# price and the rest goes back.

# In[5]:

ledger = scenario.ledger
contract = ledger.contract(1)
print("final state:", contract.state.name)
states = [contract.history[0][0]] + [b for _, b in contract.history]
print("history:", " -> ".join(s.name for s in states))
print("owner balance:", ledger.balance(scenario.owner.address))
print("buyer balance:", ledger.balance(buyer.address))


# ## Who holds which private key
#
# The proxy and the CA hold none. The owner and the sensor hold the
# sensor key, and the buyer holds only its own.

# In[6]:

for name, actor in [("proxy", scenario.proxy), ("store", scenario.store), ("ca", scenario.ca),
                    ("owner", scenario.owner), ("sensor", scenario.sensors[0]), ("buyer", buyer)]:
    print(f"{name:<7}", sorted(f"{i:08x}" for i in held_private_keys(actor)) or "-")


# ## A dishonest proxy
#
# Flip one byte of what the proxy hands over and the buyer notices. It
# cancels instead of confirming, so the deposit comes back unspent.

# In[7]:

bad = Scenario(ScenarioConfig(seed=0, fault_flip_share_byte=True))
bad_trace = bad.run()
print("mismatches:", bad_trace.mismatches)
print("contract state:", bad.ledger.contract(1).state.name)
