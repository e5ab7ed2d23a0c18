"""Simulator for a heralded-entanglement link layer between two nodes."""
