"""
Lumen — Organ vocabulary and the finding groups attached to each organ.

The 18 chest-CT findings split 11 / 2 / 2 / 1 / 2 across lung, heart,
aorta, esophagus and the catch-all "other" section.
"""

from __future__ import annotations

from typing import Optional

LUNG = "lung"
HEART = "heart"
ESOPHAGUS = "esophagus"
AORTA = "aorta"
OTHER = "other"

# Organs with retrieval indices, in report order.
INDEXED_ORGANS: tuple[str, ...] = (LUNG, HEART, ESOPHAGUS, AORTA)
ALL_ORGANS: tuple[str, ...] = (*INDEXED_ORGANS, OTHER)

FINDING_GROUPS: dict[str, tuple[str, ...]] = {
    LUNG: (
        "Lung nodule",
        "Mosaic attenuation pattern",
        "Peribronchial thickening",
        "Consolidation",
        "Bronchiectasis",
        "Interlobular septal thickening",
        "Emphysema",
        "Atelectasis",
        "Lung opacity",
        "Pulmonary fibrotic sequela",
        "Pleural effusion",
    ),
    HEART: ("Cardiomegaly", "Pericardial effusion"),
    AORTA: ("Arterial wall calcification", "Coronary artery wall calcification"),
    ESOPHAGUS: ("Hiatal hernia",),
    OTHER: ("Lymphadenopathy", "Medical material"),
}

ALL_FINDINGS: tuple[str, ...] = tuple(
    finding for organ in (LUNG, HEART, AORTA, ESOPHAGUS, OTHER) for finding in FINDING_GROUPS[organ]
)

# Bare section headers that carry no content when they survive sentence splitting.
ORGAN_HEADERS = frozenset({
    "lung", "lungs", "heart", "cardiac", "esophagus", "oesophagus", "aorta", "vascular",
    "mediastinum", "other", "findings", "impression",
})


class UnknownOrganError(ValueError):
    """Organ name outside the closed organ vocabulary."""


def normalize_organ(value: Optional[str], *, indexed_only: bool = False) -> str:
    """Lower-case and validate an organ name."""
    organ = (value or "").strip().lower()
    allowed = INDEXED_ORGANS if indexed_only else ALL_ORGANS
    if organ not in allowed:
        raise UnknownOrganError(f"Unknown organ '{value}'. Allowed values: {', '.join(allowed)}.")
    return organ


def organ_findings(organ: str) -> tuple[str, ...]:
    return FINDING_GROUPS.get(organ, ())


def organ_of_finding(finding: str) -> Optional[str]:
    for organ, findings in FINDING_GROUPS.items():
        if finding in findings:
            return organ
    return None
