"""Guest VM runtime: the provisioned workload asking for reports.

A runtime exists only for a running session and holds the channel key the
owner provisioned into it. Its single protocol act is signing payloads it
wants attested; the demo workload emits one report request with a
monotonic counter standing in for a timestamp.
"""

from __future__ import annotations

from . import crypto
from .codec import TAG_GUEST_REPORT, Atom, Label, Term, Tuple
from .sev import GuestSession

#: Code of the designated guest workload; its digest is the launch digest
#: the owner commits to and the one the secrecy property singles out.
DESIGNATED_VM_CODE = Atom(b"burrito_guest_vm")


class GuestNotRunning(RuntimeError):
    """Runtime requested for (or used on) a session that is not running."""


class GuestRuntime:
    """Execution context of one provisioned, running guest."""

    def __init__(self, session: GuestSession) -> None:
        if not session.running or session.provisioned_secret is None:
            raise GuestNotRunning("session is not running")
        secret = session.provisioned_secret
        if not isinstance(secret, Atom):
            raise GuestNotRunning("provisioned secret has unusable shape")
        self._session = session
        self._cik = secret.value
        self.vm_digest = session.dig
        self.clock = 0

    def next_report_payload(self) -> Term:
        """Demo payload: tag plus an 8-byte big-endian counter tick."""
        self.clock += 1
        return Tuple([Label(TAG_GUEST_REPORT), Atom(self.clock.to_bytes(8, "big"))])

    def request_report(self, payload: Term) -> tuple:
        """MAC a payload for the owner. Returns (payload, tag)."""
        if not self._session.running:
            raise GuestNotRunning("session is not running")
        return payload, crypto.mac(payload, self._cik)
