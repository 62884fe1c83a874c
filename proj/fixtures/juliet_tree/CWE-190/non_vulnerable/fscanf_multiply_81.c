void CWE190_Integer_Overflow__int64_t_fscanf_multiply_81_goodB2G::action(int64_t data) const
{
   if(data > 0) /* ensure we won't have an underflow */
   {
       /* FIX: Add a check to prevent an overflow from occurring */
       if (data < (LLONG_MAX/2))
       {
           int64_t result = data * 2;
           printLongLongLine(result);
       }
       else
       {
           printLine("data value is too large to perform arithmetic safely.");
       }
   }
}
