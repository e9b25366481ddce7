# Lumen — Oracle-mixed training-sample preparation
