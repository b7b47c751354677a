"""kmeans-selective tests."""
