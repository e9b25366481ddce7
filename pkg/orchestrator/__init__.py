# Lumen — Adaptive retrieval decoding loop
