"""
Lumen — Sentence templates for synthetic reports.

Every finding has one key phrase that appears in all of its templates and
in no other template, so the lookup text encoder can map a sentence back
to its finding. Slot words vary the wording without touching key phrases.
"""

from __future__ import annotations

import numpy as np

from core.findings import AORTA, ESOPHAGUS, HEART, LUNG, OTHER

SLOTS: dict[str, tuple[str, ...]] = {
    "degree": ("Mild", "Moderate", "Minimal", "Marked"),
    "size": ("3 mm", "5 mm", "7 mm", "9 mm", "12 mm"),
    "lobe": ("right upper lobe", "right middle lobe", "right lower lobe", "left upper lobe", "left lower lobe"),
    "side": ("right", "left", "bilateral"),
    "extent": ("small", "moderate", "large"),
}

# finding -> (key phrase, templates)
FINDING_TEMPLATES: dict[str, tuple[str, tuple[str, ...]]] = {
    "Lung nodule": ("nodule", (
        "A {size} nodule is seen in the {lobe}.",
        "There is a {size} solid nodule in the {lobe}.",
    )),
    "Mosaic attenuation pattern": ("mosaic attenuation", (
        "{degree} mosaic attenuation is noted in both lungs.",
        "There is {extent} mosaic attenuation in the {lobe}.",
    )),
    "Peribronchial thickening": ("peribronchial thickening", (
        "{degree} peribronchial thickening is present.",
        "There is {extent} peribronchial thickening in the {lobe}.",
    )),
    "Consolidation": ("consolidation", (
        "There is consolidation in the {lobe}.",
        "{degree} consolidation is seen in the {lobe}.",
    )),
    "Bronchiectasis": ("bronchiectasis", (
        "{degree} cylindrical bronchiectasis is seen in the {lobe}.",
        "There is {extent} bronchiectasis in the {lobe}.",
    )),
    "Interlobular septal thickening": ("septal thickening", (
        "{degree} interlobular septal thickening is noted.",
        "There is {extent} septal thickening in the {lobe}.",
    )),
    "Emphysema": ("emphysema", (
        "{degree} centrilobular emphysema is present.",
        "There is {extent} paraseptal emphysema in the {lobe}.",
    )),
    "Atelectasis": ("atelectasis", (
        "Subsegmental atelectasis is seen in the {lobe}.",
        "{degree} linear atelectasis is noted in the {lobe}.",
    )),
    "Lung opacity": ("ground glass opacity", (
        "A ground glass opacity is seen in the {lobe}.",
        "There is a {extent} ground glass opacity in the {lobe}.",
    )),
    "Pulmonary fibrotic sequela": ("fibrotic sequelae", (
        "Fibrotic sequelae are noted in the {lobe}.",
        "{degree} fibrotic sequelae are seen in the {lobe}.",
    )),
    "Pleural effusion": ("pleural effusion", (
        "There is a {extent} {side} pleural effusion.",
        "{degree} pleural effusion is present on the {side} side.",
    )),
    "Cardiomegaly": ("cardiomegaly", (
        "{degree} cardiomegaly is present.",
        "The cardiac silhouette shows {extent} cardiomegaly.",
    )),
    "Pericardial effusion": ("pericardial effusion", (
        "{degree} pericardial effusion is noted.",
        "There is a {extent} pericardial effusion.",
    )),
    "Arterial wall calcification": ("atherosclerotic calcification", (
        "{degree} atherosclerotic calcification is seen in the aortic wall.",
        "There is {extent} atherosclerotic calcification along the aortic arch.",
    )),
    "Coronary artery wall calcification": ("coronary artery calcification", (
        "{degree} coronary artery calcification is present.",
        "There is {extent} coronary artery calcification in the left anterior descending artery.",
    )),
    "Hiatal hernia": ("hiatal hernia", (
        "A {extent} hiatal hernia is noted.",
        "There is a {extent} sliding hiatal hernia.",
    )),
    "Lymphadenopathy": ("lymphadenopathy", (
        "{degree} mediastinal lymphadenopathy is present.",
        "There is {extent} hilar lymphadenopathy.",
    )),
    "Medical material": ("central venous catheter", (
        "A central venous catheter is in place.",
        "A central venous catheter terminates in the right atrium.",
    )),
}

# organ -> (key phrase, templates) for sections with no findings
NORMAL_TEMPLATES: dict[str, tuple[str, tuple[str, ...]]] = {
    LUNG: ("lungs are clear", ("The lungs are clear.", "The lungs are clear without focal lesion.")),
    HEART: ("heart size is normal", ("The heart size is normal.", "The heart size is normal without effusion.")),
    ESOPHAGUS: ("esophagus is unremarkable", ("The esophagus is unremarkable.", "The esophagus is unremarkable in course.")),
    AORTA: ("aorta is normal in caliber", ("The aorta is normal in caliber.", "The thoracic aorta is normal in caliber.")),
    OTHER: ("mediastinal structures are unremarkable", ("The mediastinal structures are unremarkable.",)),
}


def fill(template: str, rng: np.random.Generator) -> str:
    """Fill every slot with a uniformly drawn word; draw order follows SLOTS."""
    values = {name: words[int(rng.integers(len(words)))] for name, words in SLOTS.items()}
    return template.format(**values)


def realize(templates: tuple[str, ...], rng: np.random.Generator) -> str:
    return fill(templates[int(rng.integers(len(templates)))], rng)
