"""Credential generation and verification for annotator accounts.

Usernames are machine-generated opaque codes carrying no personal
information; passwords are shown once at generation time and stored only as
salted PBKDF2 hashes.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets

from . import errors
from .model import Annotator
from .store import Store

# unambiguous lowercase alphabet (no l/o/0/1)
_USERNAME_ALPHABET = "abcdefghijkmnpqrstuvwxyz23456789"
_PASSWORD_ALPHABET = _USERNAME_ALPHABET + "ABCDEFGHJKLMNPQRSTUVWXYZ"

PBKDF2_ITERATIONS = 30_000


def hash_password(password: str, salt: bytes | None = None) -> str:
    salt = salt if salt is not None else secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt, PBKDF2_ITERATIONS
    )
    return f"pbkdf2${PBKDF2_ITERATIONS}${salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, iterations, salt_hex, digest_hex = stored.split("$")
        if scheme != "pbkdf2":
            return False
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), bytes.fromhex(salt_hex), int(iterations)
        )
        return hmac.compare_digest(digest.hex(), digest_hex)
    except (ValueError, AttributeError):
        return False


def _random_code(alphabet: str, length: int, rng: random.Random | None) -> str:
    if rng is None:
        return "".join(secrets.choice(alphabet) for _ in range(length))
    return "".join(rng.choice(alphabet) for _ in range(length))


def generate_annotators(
    store: Store,
    campaign_id: str,
    count: int,
    language: str | None = None,
    rng: random.Random | None = None,
) -> list[tuple[Annotator, str]]:
    """Create ``count`` annotator accounts, returning (annotator, password)
    pairs. Passwords are not retrievable afterwards.

    ``rng`` makes generation reproducible for tests; production callers leave
    it None to use the OS entropy pool.
    """
    if not isinstance(count, int) or isinstance(count, bool) or count < 1:
        raise errors.InvalidCount(f"count must be a positive integer, got {count!r}")
    campaign = store.get_campaign(campaign_id)
    if campaign.status == "closed":
        raise errors.CampaignClosed(
            f"campaign {campaign_id} is closed; cannot add annotators"
        )
    ui_language = language or campaign.default_language
    out: list[tuple[Annotator, str]] = []
    with store.lock:
        taken = {a.username for a in store.list_annotators(campaign_id)}
        for _ in range(count):
            while True:
                username = "u" + _random_code(_USERNAME_ALPHABET, 8, rng)
                if username not in taken:
                    break
            taken.add(username)
            password = _random_code(_PASSWORD_ALPHABET, 12, rng)
            annotator = store.add_annotator(
                campaign_id, username, hash_password(password), ui_language
            )
            out.append((annotator, password))
    return out
