"""Concrete components: classifiers, dataset generators and loaders."""
