"""Composite remote attestation of SEV guest VMs through an SGX enclave.

Library layers:

- codec / crypto: canonical term encoding and the schemes bound to it
- sgx / sev: abstract platform attestation primitives for each TEE
- owner / guest / relying_party: the trusted-guest-owner protocol roles
- harness: deterministic multi-party simulator, symbolic adversary,
  scenario library, and trace-property checkers
- cli: `vmquote run | verify | fuzz`
"""

__version__ = "0.1.0"
