"""Closed enumeration of region keys and the alias table used to resolve
source spellings onto them."""

from __future__ import annotations

import enum
import unicodedata


class UnknownRegionError(ValueError):
    """A region spelling that is not in the alias table."""


class RegionId(str, enum.Enum):
    ABRUZZO = "Abruzzo"
    BASILICATA = "Basilicata"
    CALABRIA = "Calabria"
    CAMPANIA = "Campania"
    EMILIA_ROMAGNA = "Emilia-Romagna"
    FRIULI_VENEZIA_GIULIA = "Friuli Venezia Giulia"
    LAZIO = "Lazio"
    LIGURIA = "Liguria"
    LOMBARDIA = "Lombardia"
    MARCHE = "Marche"
    MOLISE = "Molise"
    PA_BOLZANO = "P.A. Bolzano"
    PA_TRENTO = "P.A. Trento"
    PIEMONTE = "Piemonte"
    PUGLIA = "Puglia"
    SARDEGNA = "Sardegna"
    SICILIA = "Sicilia"
    TOSCANA = "Toscana"
    UMBRIA = "Umbria"
    VALLE_D_AOSTA = "Valle d'Aosta"
    VENETO = "Veneto"
    # Mortality data reports the two autonomous provinces together.
    PA_BOLZANO_TRENTO = "P.A. Bolzano+Trento"
    ITALY = "Italy"
    DIAMOND_PRINCESS = "DiamondPrincess"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str, aliases: dict[str, "RegionId"] | None = None) -> "RegionId":
        """Resolve ``text`` to a region key.

        ``aliases`` (source spelling -> key) is consulted first, then the
        built-in alias table. Anything else raises :class:`UnknownRegionError`.
        """
        if aliases:
            if text in aliases:
                return aliases[text]
            folded = _fold(text)
            for k, v in aliases.items():
                if _fold(k) == folded:
                    return v
        try:
            return _BUILTIN[_fold(text)]
        except KeyError:
            raise UnknownRegionError(f"unknown region spelling {text!r}") from None


def _fold(text: str) -> str:
    text = unicodedata.normalize("NFKD", text)
    text = "".join(c for c in text if not unicodedata.combining(c))
    text = text.replace("’", "'").replace("‘", "'")
    return " ".join(text.lower().replace("-", " ").replace("_", " ").split())


# Regions reported by the daily case bulletins (21 keys).
CASE_REGIONS: tuple[RegionId, ...] = (
    RegionId.ABRUZZO,
    RegionId.BASILICATA,
    RegionId.CALABRIA,
    RegionId.CAMPANIA,
    RegionId.EMILIA_ROMAGNA,
    RegionId.FRIULI_VENEZIA_GIULIA,
    RegionId.LAZIO,
    RegionId.LIGURIA,
    RegionId.LOMBARDIA,
    RegionId.MARCHE,
    RegionId.MOLISE,
    RegionId.PA_BOLZANO,
    RegionId.PA_TRENTO,
    RegionId.PIEMONTE,
    RegionId.PUGLIA,
    RegionId.SARDEGNA,
    RegionId.SICILIA,
    RegionId.TOSCANA,
    RegionId.UMBRIA,
    RegionId.VALLE_D_AOSTA,
    RegionId.VENETO,
)

# Regions reported by the municipal mortality file (20 keys).
MORTALITY_REGIONS: tuple[RegionId, ...] = tuple(
    r for r in CASE_REGIONS if r not in (RegionId.PA_BOLZANO, RegionId.PA_TRENTO)
) + (RegionId.PA_BOLZANO_TRENTO,)


def mortality_region(region: RegionId) -> RegionId | None:
    """Key of the mortality series covering ``region``.

    Returns None for the two autonomous provinces: their deaths are only
    available merged, so a per-province scaling is not possible.
    """
    if region in (RegionId.PA_BOLZANO, RegionId.PA_TRENTO, RegionId.DIAMOND_PRINCESS):
        return None
    return region


_SPELLINGS: dict[RegionId, tuple[str, ...]] = {
    RegionId.ABRUZZO: ("Abruzzo",),
    RegionId.BASILICATA: ("Basilicata",),
    RegionId.CALABRIA: ("Calabria",),
    RegionId.CAMPANIA: ("Campania",),
    RegionId.EMILIA_ROMAGNA: ("Emilia-Romagna", "Emilia Romagna"),
    RegionId.FRIULI_VENEZIA_GIULIA: (
        "Friuli Venezia Giulia",
        "Friuli-Venezia Giulia",
        "Friuli V. G.",
    ),
    RegionId.LAZIO: ("Lazio",),
    RegionId.LIGURIA: ("Liguria",),
    RegionId.LOMBARDIA: ("Lombardia", "Lombardy"),
    RegionId.MARCHE: ("Marche",),
    RegionId.MOLISE: ("Molise",),
    RegionId.PA_BOLZANO: ("P.A. Bolzano", "Bolzano", "Provincia autonoma di Bolzano"),
    RegionId.PA_TRENTO: ("P.A. Trento", "Trento", "Provincia autonoma di Trento"),
    RegionId.PIEMONTE: ("Piemonte", "Piedmont"),
    RegionId.PUGLIA: ("Puglia", "Apulia"),
    RegionId.SARDEGNA: ("Sardegna", "Sardinia"),
    RegionId.SICILIA: ("Sicilia", "Sicily"),
    RegionId.TOSCANA: ("Toscana", "Tuscany"),
    RegionId.UMBRIA: ("Umbria",),
    RegionId.VALLE_D_AOSTA: (
        "Valle d'Aosta",
        "Valle d'Aosta/Vallée d'Aoste",
        "Aosta Valley",
    ),
    RegionId.VENETO: ("Veneto",),
    RegionId.PA_BOLZANO_TRENTO: (
        "P.A. Bolzano+Trento",
        "Trentino-Alto Adige",
        "Trentino-Alto Adige/Südtirol",
        "Trentino Alto Adige",
    ),
    RegionId.ITALY: ("Italy", "Italia"),
    RegionId.DIAMOND_PRINCESS: ("DiamondPrincess", "Diamond Princess"),
}

_BUILTIN: dict[str, RegionId] = {
    _fold(name): region for region, names in _SPELLINGS.items() for name in names
}
