# Test package for migration-orchestration
