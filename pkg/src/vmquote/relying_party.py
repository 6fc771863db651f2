"""Relying party: decide whether a quote truly speaks for a guest VM.

The verifier is offline and stateless: everything it needs arrives as
explicit inputs (no hidden key lookups). It recomputes the expected
report data from the public evidence and accepts exactly when the quote
chain verifies against the pinned owner-enclave measurement and that
recomputed data.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import Atom, Term
from .owner import report_data_preimage
from .sev import Measurement
from .sgx import Quote, SgxPlatformCert, quote_check_failure
from . import crypto

REASON_CERT_SIG = "cert-sig"
REASON_QUOTE_SIG = "quote-sig"
REASON_MSR_MISMATCH = "msr-mismatch"
REASON_DATA_MISMATCH = "data-mismatch"
REASON_MALFORMED = "malformed"


@dataclass(frozen=True)
class VerificationInput:
    """Everything a verdict depends on.

    quote/sgx_cert/pspid/vmmsr/vmdata are the evidence bundle; intel_pk
    and expected_to_msr are the verifier's own trust anchors.
    """

    quote: Quote
    sgx_cert: SgxPlatformCert
    intel_pk: bytes
    expected_to_msr: Term
    pspid: bytes
    vmmsr: Measurement
    vmdata: Term


@dataclass(frozen=True)
class Verdict:
    accept: bool
    reason: str | None = None


def rp_verify_vm_quote(vin: VerificationInput) -> Verdict:
    """Accept iff the quote binds (pspid, vmmsr, vmdata) to the owner.

    Rejections carry the first failing check: cert-sig, quote-sig,
    msr-mismatch, data-mismatch, or malformed for inputs that do not
    even reach the checks.
    """
    try:
        expected_data = Atom(
            crypto.digest(report_data_preimage(vin.pspid, vin.vmmsr, vin.vmdata))
        )
        failure = quote_check_failure(
            vin.expected_to_msr, expected_data, vin.quote, vin.sgx_cert, vin.intel_pk
        )
    except Exception:
        return Verdict(accept=False, reason=REASON_MALFORMED)
    if failure is None:
        return Verdict(accept=True)
    return Verdict(accept=False, reason=failure)
