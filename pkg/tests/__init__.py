# Tests for ag-agent-manager
