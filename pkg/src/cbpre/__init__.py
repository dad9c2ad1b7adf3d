"""Certificate-based proxy re-encryption and a simulated IoT data marketplace."""

from .group import SECP256K1, DecodeError, Group, MockGroup, Secp256k1Group
from .scheme import (
    AuthError,
    Ciphertext,
    KeyPair,
    Metadata,
    PublicParams,
    ReEncCiphertext,
    ValidationFailed,
    ca_issue,
    cert_request,
    certified_user_keygen,
    decrypt1,
    decrypt2,
    derive_public_key,
    encrypt,
    finalize_key,
    reencrypt,
    rekey,
    setup,
)
from .actors import ScenarioConfig, ScenarioStalled, ScenarioTrace, run_scenario
from .bench import bench_impact, bench_scale

__version__ = "0.1.0"
