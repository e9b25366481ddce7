# Lumen — Representational-bottleneck diagnostics
