"""Bergman-geodesic approximation of Monge-Ampere geodesics on O(k) -> P^1."""
