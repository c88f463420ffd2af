"""The models module holds the data types of a verification run."""
