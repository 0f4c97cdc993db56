"""
CLI Commands Module

Command handlers for data synthesis, training, evaluation, imputation, checks, analysis and configuration.
"""
