"""slogette: a first-class-fact Datalog engine and its command-line driver."""
