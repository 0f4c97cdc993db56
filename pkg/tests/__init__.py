# stimpute test package
