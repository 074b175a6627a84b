# Settings package

