# makes sibling test helpers (bumpy_metric, random_form) importable
