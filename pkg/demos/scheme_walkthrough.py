# coding: utf-8

# # Certified proxy re-encryption, step by step
#
# A sensor owns a reading. A buyer wants it. A cloud proxy sits in between
# and must transform the sensor's ciphertext for the buyer without ever
# being able to read it. This walkthrough runs each operation by hand on
# secp256k1, then once more on a tiny additive group where every value
# fits on a line.

# In[1]:

import random

from cbpre import SECP256K1, MockGroup
from cbpre.scheme import (
    AuthError,
    Metadata,
    ca_issue,
    cert_request,
    decrypt1,
    decrypt2,
    derive_public_key,
    encode_certificate,
    encrypt,
    finalize_key,
    h2,
    reencrypt,
    rekey,
    setup,
)

rng = random.Random(7)
group = SECP256K1


# ## The certificate authority
#
# Setup draws the master secret alpha and publishes P_alpha = alpha*P.

# In[2]:

params, msk = setup(group, rng)
print("P_alpha", group.encode_point(params.p_alpha).hex())


# ## Implicit certificates
#
# The user sends R_U = r_U*P. The CA answers with a certificate point and a
# scalar r_a. Nobody ships a public key around: anyone can rebuild it from
# the certificate, the identity and P_alpha.

# In[3]:

SENSOR, BUYER = 0x00000001, 0x80000001

r_sensor, req = cert_request(params, SENSOR, rng)
resp = ca_issue(params, msk, req, rng)
sensor = finalize_key(params, r_sensor, resp, SENSOR)

r_buyer, req = cert_request(params, BUYER, rng)
buyer = finalize_key(params, r_buyer, ca_issue(params, msk, req, rng), BUYER)

print("sensor cert  ", encode_certificate(group, sensor.cert).hex())
print("rebuilt key ok", derive_public_key(params, sensor.cert, SENSOR) == sensor.public)


# A response doctored in transit is caught by finalize_key, which checks
# d*P against the key rebuilt from the certificate.

# In[4]:

from cbpre.scheme import CertResponse, ValidationFailed

try:
    finalize_key(params, r_sensor, CertResponse(resp.r_a + 1, resp.cert), SENSOR)
except ValidationFailed as exc:
    print("rejected:", exc)


# ## Encrypting one reading
#
# The scheme works on 32-byte blocks. In the marketplace the block is a
# fresh content key and the reading itself travels under that key; here
# we just pad a string.

# In[5]:

T0 = 1_700_000_000
reading = b"23.5C".ljust(32, b"\0")
c = encrypt(params, reading, sensor, T0)
print("meta ", c.meta)
print("C_A  ", c.c_a.hex())
print("owner reads back:", decrypt1(params, c, sensor).rstrip(b"\0"))


# The pair (h_A, s_A) works like a Schnorr signature. The same r used for
# the pad comes back out as s*P + h*P_A.

# In[6]:

r = h2(group, sensor.d, c.meta)
lhs = group.point_add(group.base_mul(c.s_a), group.point_mul(c.h_a, sensor.public))
print("s*P + h*P_A == r*P:", lhs == group.base_mul(r))


# ## Delegation
#
# The re-encryption key is the XOR of two pads, one under P_A and one under
# the buyer's P_B. It is per record because the pads depend on meta.

# In[7]:

rk = rekey(params, sensor, buyer.id, buyer.cert, c.meta)
c2 = reencrypt(params, c, rk, buyer.id)
print("rk   ", rk.hex())
print("C_B  ", c2.c_b.hex())
print("buyer reads:", decrypt2(params, c2, buyer, sensor.public).rstrip(b"\0"))


# Whatever the proxy XORs together, it only ever swaps the sensor's pad
# for the buyer's; stripping either needs a private key. Handing the same
# C_B to someone else gets them nowhere:

# In[8]:

try:
    decrypt2(params, c2, sensor, sensor.public)
except AuthError as exc:
    print("wrong delegate:", exc)
print("self rekey is zero:", rekey(params, sensor, sensor.id, sensor.cert, c.meta) == bytes(32))


# ## The same thing in a group you can do by hand
#
# MockGroup(101) is the integers mod 101 under addition, generator 1. It is
# useless for security, which is why it must be asked for explicitly, but
# every point is a small number.

# In[9]:

toy = MockGroup(101, insecure=True)
tparams, tmsk = setup(toy, alpha=5)
r_u, req = cert_request(tparams, SENSOR, secret=3)
tresp = ca_issue(tparams, tmsk, req, r_t=4)
tsensor = finalize_key(tparams, 3, tresp, SENSOR)
print(f"R_U = {req.r_u}, cert = 3 + 4 = {tresp.cert}, r_a = {tresp.r_a}, d = {tsensor.d}, P_A = {tsensor.public}")

tc = encrypt(tparams, reading, tsensor, T0)
print(f"h_A = {tc.h_a}, s_A = {tc.s_a}, r = {h2(toy, tsensor.d, Metadata(SENSOR, T0))}")
