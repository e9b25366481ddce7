# Lumen — Organ-indexed sentence database
