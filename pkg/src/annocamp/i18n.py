"""Message catalogs: one UTF-8 ``key = value`` file per language.

Every installed language must define every key the default language defines;
the check runs when the catalog set is loaded, so an untranslated key is a
startup failure rather than a runtime fallback.
"""

from __future__ import annotations

from pathlib import Path

from . import errors

DEFAULT_LANGUAGE = "en"

_PACKAGED_DIR = Path(__file__).parent / "catalogs"


def parse_catalog(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise errors.InvalidConfig(
                f"catalog line {line_no} is not key = value: {line!r}"
            )
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def category_key(label: str) -> str:
    return "category." + label.lower().replace(" ", "_")


class MessageCatalog:
    def __init__(
        self, catalogs: dict[str, dict[str, str]], default_language: str = DEFAULT_LANGUAGE
    ):
        if default_language not in catalogs:
            raise errors.InvalidConfig(
                f"default language {default_language!r} has no catalog"
            )
        required = set(catalogs[default_language])
        for language, entries in catalogs.items():
            missing = required - set(entries)
            if missing:
                raise errors.InvalidConfig(
                    f"catalog {language!r} is missing keys: "
                    + ", ".join(sorted(missing))
                )
        self._catalogs = catalogs
        self.default_language = default_language

    @property
    def languages(self) -> tuple[str, ...]:
        return tuple(sorted(self._catalogs))

    def has_key(self, key: str) -> bool:
        return key in self._catalogs[self.default_language]

    def language_for(self, language: str) -> str:
        return language if language in self._catalogs else self.default_language

    def get(self, language: str, key: str) -> str:
        return self._catalogs[self.language_for(language)][key]

    def entries(self, language: str) -> dict[str, str]:
        return dict(self._catalogs[self.language_for(language)])

    def category_label(self, language: str, category: str) -> str:
        """Localized label for a trigger category; custom campaign categories
        without a catalog entry display as-is (they are data, not chrome)."""
        key = category_key(category)
        entries = self._catalogs[self.language_for(language)]
        return entries.get(key, category)


def load_catalogs(directory: str | Path | None = None) -> MessageCatalog:
    """Load every ``<language>.txt`` in the directory (default: the shipped
    en/fr/it catalogs)."""
    base = Path(directory) if directory is not None else _PACKAGED_DIR
    catalogs: dict[str, dict[str, str]] = {}
    for path in sorted(base.glob("*.txt")):
        catalogs[path.stem] = parse_catalog(path.read_text(encoding="utf-8"))
    if not catalogs:
        raise errors.InvalidConfig(f"no catalog files found in {base}")
    return MessageCatalog(catalogs)
