"""Training toolkit for passive linear resistor networks."""
