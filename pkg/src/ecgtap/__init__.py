"""ECG rhythm classification from spectrogram windows via CNN layer taps.

Batch pipeline: WFDB records -> labeled 500-sample windows -> spectrogram
images -> feature vectors tapped from intermediate layers of a pretrained
convolutional network -> chi-squared top-k selection -> one-vs-rest linear
SVM under stratified 10-fold cross-validation.
"""

__version__ = "0.1.0"
