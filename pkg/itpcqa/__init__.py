'''itpcqa -- image-transferred point cloud quality assessment
-----------------------------------------------------------

Point clouds are projected to images; a CNN regressor learned on a
labeled image domain is adapted, adversarially and by rank agreement,
to unlabeled projections of point clouds.

See :mod:`itpcqa.cli` for the command line.

'''

__version__ = '0.1.0'
